//! Multiply-accumulate, parameter and activation counts per layer.
//!
//! One MAC is one kernel-element × output-element product. For an output
//! of `N·D_o·H_o·W_o` positions and `C_o` channels:
//!
//! | layer      | MACs                         | params (bias excluded) | activations |
//! |------------|------------------------------|------------------------|-------------|
//! | Conv `k`   | `N·DHW·C_o·C_i·vol(k)`       | `C_o·C_i·vol(k)`       | `N·DHW·C_o` |
//! | ACS        | `N·DHW·C_o·C_i·K²`           | `C_o·C_i·K²`           | `N·DHW·C_o` |
//! | Mean-ACS   | `3 ×` ACS                    | `C_o·C_i·K²`           | `3 ×`       |
//! | Soft-ACS   | Mean-ACS `+ 3·N·DHW·C_o`     | `C_o·C_i·K² + 3`       | `3 ×`       |
//! | linear     | `N·F_in·F_out`               | `F_in·F_out`           | `N·F_out`   |
//! | others     | output elements              | norm scale and shift   | output      |
//!
//! Bias elements are reported separately. Running statistics are state and
//! are not counted.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{infer_shapes, AcsVariant, Dim, LayerKind, LayerNode, ModelGraph};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRecord {
    pub name: String,
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub macs: u64,
    pub params: u64,
    pub bias_params: u64,
    pub activation_elems: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostTotals {
    pub macs: u64,
    pub params: u64,
    pub bias_params: u64,
    /// Sum over layers.
    pub activation_elems: u64,
    /// Largest single-layer activation.
    pub peak_activation_elems: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostReport {
    pub layers: Vec<CostRecord>,
    pub totals: CostTotals,
}

impl CostReport {
    pub fn from_layers(layers: Vec<CostRecord>) -> Self {
        let mut t = CostTotals::default();
        for l in &layers {
            t.macs += l.macs;
            t.params += l.params;
            t.bias_params += l.bias_params;
            t.activation_elems += l.activation_elems;
            t.peak_activation_elems = t.peak_activation_elems.max(l.activation_elems);
        }
        Self { layers, totals: t }
    }

    pub fn layer(&self, name: &str) -> Option<&CostRecord> {
        self.layers.iter().find(|l| l.name == name)
    }
}

fn n(v: usize) -> u64 {
    v as u64
}

/// Cost of one node given the shapes of its inputs.
pub fn layer_cost(node: &LayerNode, dim: Dim, inputs: &[&[usize]]) -> Result<CostRecord> {
    let out = crate::graph::node_shape(dim, &node.kind, inputs).map_err(|e| e.at(&node.name))?;
    let elems = n(out.iter().product());
    let positions = elems / n(out[1].max(1));
    let mut rec = CostRecord {
        name: node.name.clone(),
        kind: node.kind.name(dim),
        output_shape: out,
        macs: elems,
        params: 0,
        bias_params: 0,
        activation_elems: elems,
    };
    match &node.kind {
        LayerKind::Conv { cfg, bias, .. } => {
            let w = n(cfg.out_channels * cfg.in_channels * cfg.kernel_volume());
            rec.params = w;
            rec.macs = positions * w;
            rec.bias_params = if *bias { n(cfg.out_channels) } else { 0 };
        }
        LayerKind::Acs { cfg, bias, variant } => {
            let k = cfg.kernel[0];
            let w = n(cfg.out_channels * cfg.in_channels * k * k);
            let acs = positions * w;
            rec.params = w;
            rec.bias_params = if *bias { n(cfg.out_channels) } else { 0 };
            match variant {
                AcsVariant::Split => rec.macs = acs,
                AcsVariant::Mean => {
                    rec.macs = 3 * acs;
                    rec.activation_elems = 3 * elems;
                }
                AcsVariant::Soft => {
                    rec.macs = 3 * acs + 3 * elems;
                    rec.activation_elems = 3 * elems;
                    rec.params += 3;
                }
            }
        }
        LayerKind::BatchNorm { channels, .. } | LayerKind::GroupNorm { channels, .. } => {
            rec.params = 2 * n(*channels);
        }
        LayerKind::Linear {
            in_features,
            out_features,
            bias,
        } => {
            let w = n(in_features * out_features);
            rec.params = w;
            rec.macs = n(rec.output_shape[0]) * w;
            rec.bias_params = if *bias { n(*out_features) } else { 0 };
        }
        _ => {}
    }
    Ok(rec)
}

/// Per-node costs in graph order, for an input of the given shape.
pub fn model_cost(g: &ModelGraph, input: &[usize]) -> Result<CostReport> {
    let shapes = infer_shapes(g, input)?;
    let mut layers = Vec::with_capacity(g.nodes().len());
    for node in g.nodes() {
        let ins: Vec<&[usize]> = node
            .inputs
            .iter()
            .map(|s| match g.position(s) {
                Some(i) => shapes[i].as_slice(),
                None => input,
            })
            .collect();
        layers.push(layer_cost(node, g.dim(), &ins)?);
    }
    Ok(CostReport::from_layers(layers))
}

/// `numerator / denominator` for each shared layer name and for the totals.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub layers: Vec<(String, f64, f64)>,
    pub macs: f64,
    pub params: f64,
}

pub fn compare(numerator: &CostReport, denominator: &CostReport) -> Comparison {
    let ratio = |a: u64, b: u64| {
        if b == 0 {
            f64::NAN
        } else {
            a as f64 / b as f64
        }
    };
    let layers = numerator
        .layers
        .iter()
        .filter_map(|l| {
            denominator.layer(&l.name).map(|d| {
                (
                    l.name.clone(),
                    ratio(l.macs, d.macs),
                    ratio(l.params, d.params),
                )
            })
        })
        .collect();
    Comparison {
        layers,
        macs: ratio(numerator.totals.macs, denominator.totals.macs),
        params: ratio(numerator.totals.params, denominator.totals.params),
    }
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Dim, KernelSource, LayerKind, LayerNode, ModelGraph};
use crate::error::Result;
use crate::ops::{ConvConfig, PoolConfig};

/// A small 2D UNet: `levels` resolution levels, two 3×3 conv-BN-ReLU
/// blocks per level, 2×2 max pooling, nearest upsampling with skip
/// concatenation, and a biased 1×1 head producing `classes` logits.
///
/// Encoder nodes are named `encoder.*`, decoder nodes `decoder.*`, the
/// head `head`. Level `l` (from 1) has `base·2^(l−1)` channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub classes: usize,
    pub base: usize,
    pub levels: usize,
}

impl Default for UNetSpec {
    fn default() -> Self {
        Self {
            in_channels: 1,
            classes: 2,
            base: 8,
            levels: 3,
        }
    }
}

fn conv_block(
    nodes: &mut Vec<LayerNode>,
    prefix: &str,
    input: &str,
    ci: usize,
    co: usize,
) -> String {
    let mut src = String::from(input);
    for (i, c_in) in [(1, ci), (2, co)] {
        let conv = format!("{prefix}.conv{i}");
        let bn = format!("{prefix}.bn{i}");
        let relu = format!("{prefix}.relu{i}");
        nodes.push(LayerNode::new(
            conv.as_str(),
            LayerKind::Conv {
                cfg: ConvConfig::planar(c_in, co, 3, 1, 1, 1),
                bias: false,
                source: KernelSource::Direct,
            },
            &[&src],
        ));
        nodes.push(LayerNode::new(
            bn.as_str(),
            LayerKind::BatchNorm {
                channels: co,
                eps: 1e-5,
                momentum: 0.1,
            },
            &[&conv],
        ));
        nodes.push(LayerNode::new(relu.as_str(), LayerKind::Relu, &[&bn]));
        src = relu;
    }
    src
}

pub fn toy_unet(spec: UNetSpec) -> Result<ModelGraph> {
    let levels = spec.levels.max(1);
    let width = |l: usize| spec.base << (l - 1);
    let mut nodes = Vec::new();
    let mut skips = Vec::new();
    let mut src = String::from("input");
    let mut ci = spec.in_channels;
    for l in 1..=levels {
        if l > 1 {
            let pool = format!("encoder.pool{}", l - 1);
            nodes.push(LayerNode::new(
                pool.as_str(),
                LayerKind::MaxPool(PoolConfig::new([1, 2, 2], [1, 2, 2], [0; 3])),
                &[&src],
            ));
            src = pool;
        }
        src = conv_block(&mut nodes, &format!("encoder.down{l}"), &src, ci, width(l));
        skips.push(src.clone());
        ci = width(l);
    }
    for l in (1..levels).rev() {
        let up = format!("decoder.up{l}");
        let cat = format!("decoder.cat{l}");
        nodes.push(LayerNode::new(
            up.as_str(),
            LayerKind::UpsampleNearest([1, 2, 2]),
            &[&src],
        ));
        nodes.push(LayerNode::new(
            cat.as_str(),
            LayerKind::Concat,
            &[&up, &skips[l - 1]],
        ));
        src = conv_block(
            &mut nodes,
            &format!("decoder.dec{l}"),
            &cat,
            ci + width(l),
            width(l),
        );
        ci = width(l);
    }
    nodes.push(LayerNode::new(
        "head",
        LayerKind::Conv {
            cfg: ConvConfig::planar(ci, spec.classes, 1, 1, 0, 1),
            bias: true,
            source: KernelSource::Direct,
        },
        &[&src],
    ));
    ModelGraph::new(Dim::D2, "input", nodes, vec![String::from("head")])
}

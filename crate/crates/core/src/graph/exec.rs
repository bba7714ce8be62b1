//! Graph execution with a recorded tape for reverse-mode gradients.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{AcsVariant, LayerKind, LayerNode, ModelGraph, SlotRole};
use crate::acs::{
    acs_conv, acs_conv_backward, mean_acs_conv, mean_acs_conv_backward, soft_acs_conv,
    soft_acs_conv_backward, AcsKernel, SoftWeights,
};
use crate::error::{Error, Result};
use crate::ops::{self, NormMode, PoolMode};
use crate::real::Real;
use crate::store::ParamStore;
use crate::tensor::Tensor;

enum Cache<T> {
    None,
    Pool(ops::PoolCache),
    BatchNorm(ops::BatchNormCache<T>),
    GroupNorm(ops::GroupNormCache<T>),
}

/// Values of every node from one forward pass, plus what the backward pass
/// needs.
pub struct Forward<'a, T> {
    graph: &'a ModelGraph,
    input: &'a Tensor<T>,
    values: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
    running: Vec<(String, Tensor<T>)>,
}

/// Gradients with respect to every trainable slot and the graph input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub params: ParamStore<T>,
    pub input: Tensor<T>,
}

fn param<'p, T: Real>(
    params: &'p ParamStore<T>,
    node: &LayerNode,
    role: SlotRole,
) -> Result<&'p Tensor<T>> {
    params.require(&node.slot_name(role))
}

fn opt_param<'p, T: Real>(
    params: &'p ParamStore<T>,
    node: &LayerNode,
    role: SlotRole,
    present: bool,
) -> Result<Option<&'p Tensor<T>>> {
    if present {
        param(params, node, role).map(Some)
    } else {
        Ok(None)
    }
}

fn soft_weights<T: Real>(t: &Tensor<T>) -> Result<SoftWeights<T>> {
    match *t.data() {
        [a, c, s] => Ok(SoftWeights::new([a, c, s])),
        _ => Err(Error::ShapeMismatch {
            context: "soft logits",
            expected: vec![3],
            actual: t.shape().to_vec(),
        }),
    }
}

/// Runs `g` on `x`. In train mode batch statistics are used and the
/// updated running statistics are collected (see
/// [`Forward::apply_running`]); `params` itself is never modified.
pub fn forward<'a, T: Real>(
    g: &'a ModelGraph,
    params: &ParamStore<T>,
    x: &'a Tensor<T>,
    mode: NormMode,
) -> Result<Forward<'a, T>> {
    if x.rank() != g.dim().rank() {
        return Err(Error::RankMismatch {
            expected: g.dim().rank(),
            actual: x.rank(),
        });
    }
    let mut fw = Forward {
        graph: g,
        input: x,
        values: Vec::with_capacity(g.nodes().len()),
        caches: Vec::with_capacity(g.nodes().len()),
        running: Vec::new(),
    };
    let mut running = Vec::new();
    for node in g.nodes() {
        let (y, cache) = fw
            .run_node(node, params, mode, &mut running)
            .map_err(|e| e.at(&node.name))?;
        fw.values.push(y);
        fw.caches.push(cache);
    }
    fw.running = running;
    Ok(fw)
}

impl<'a, T: Real> Forward<'a, T> {
    fn source(&self, name: &str) -> &Tensor<T> {
        match self.graph.position(name) {
            Some(i) => &self.values[i],
            None => self.input,
        }
    }

    fn run_node(
        &self,
        node: &LayerNode,
        params: &ParamStore<T>,
        mode: NormMode,
        running: &mut Vec<(String, Tensor<T>)>,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        let x = self.source(&node.inputs[0]);
        let plain = |y: Tensor<T>| Ok((y, Cache::None));
        match &node.kind {
            LayerKind::Conv { cfg, bias, .. } => {
                let w = param(params, node, SlotRole::Weight)?;
                let b = opt_param(params, node, SlotRole::Bias, *bias)?;
                plain(ops::conv(x, w, b, cfg)?)
            }
            LayerKind::Acs { cfg, bias, variant } => {
                let w = param(params, node, SlotRole::Weight)?;
                let b = opt_param(params, node, SlotRole::Bias, *bias)?;
                let y = match variant {
                    AcsVariant::Split => acs_conv(x, &AcsKernel::new(w.clone(), b.cloned())?, cfg)?,
                    AcsVariant::Mean => mean_acs_conv(x, w, b, cfg)?,
                    AcsVariant::Soft => {
                        let soft = soft_weights(param(params, node, SlotRole::Logits)?)?;
                        soft_acs_conv(x, w, b, &soft, cfg)?
                    }
                };
                plain(y)
            }
            LayerKind::BatchNorm { eps, momentum, .. } => {
                let out = ops::batchnorm(
                    x,
                    param(params, node, SlotRole::Gamma)?,
                    param(params, node, SlotRole::Beta)?,
                    param(params, node, SlotRole::RunningMean)?,
                    param(params, node, SlotRole::RunningVar)?,
                    T::of(*eps),
                    T::of(*momentum),
                    mode,
                )?;
                if let Some((rm, rv)) = out.running {
                    running.push((node.slot_name(SlotRole::RunningMean), rm));
                    running.push((node.slot_name(SlotRole::RunningVar), rv));
                }
                Ok((out.output, Cache::BatchNorm(out.cache)))
            }
            LayerKind::GroupNorm { groups, eps, .. } => {
                let (y, cache) = ops::groupnorm(
                    x,
                    param(params, node, SlotRole::Gamma)?,
                    param(params, node, SlotRole::Beta)?,
                    *groups,
                    T::of(*eps),
                )?;
                Ok((y, Cache::GroupNorm(cache)))
            }
            LayerKind::MaxPool(p) => {
                let (y, c) = ops::pool3d(x, PoolMode::Max, p)?;
                Ok((y, Cache::Pool(c)))
            }
            LayerKind::AvgPool(p) => plain(ops::pool3d(x, PoolMode::Avg, p)?.0),
            LayerKind::Relu => plain(ops::relu(x)),
            LayerKind::Add => {
                let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|s| self.source(s)).collect();
                plain(ops::add(&ins)?)
            }
            LayerKind::Concat => {
                let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|s| self.source(s)).collect();
                plain(ops::concat_channels(&ins)?)
            }
            LayerKind::UpsampleNearest(f) => plain(ops::upsample_nearest(x, *f)?),
            LayerKind::GlobalAvgPool => plain(ops::global_avg_pool(x)?),
            LayerKind::Linear { bias, .. } => {
                let w = param(params, node, SlotRole::Weight)?;
                let b = opt_param(params, node, SlotRole::Bias, *bias)?;
                plain(ops::linear(x, w, b)?)
            }
        }
    }

    /// Value produced by the named node (or the graph input).
    pub fn value(&self, name: &str) -> Option<&Tensor<T>> {
        match self.graph.position(name) {
            Some(i) => Some(&self.values[i]),
            None if name == self.graph.input() => Some(self.input),
            None => None,
        }
    }

    /// The graph outputs in declaration order.
    pub fn outputs(&self) -> Vec<&Tensor<T>> {
        self.graph
            .outputs()
            .iter()
            .map(|o| self.source(o))
            .collect()
    }

    pub fn into_output(mut self) -> Tensor<T> {
        let name = &self.graph.outputs()[0];
        match self.graph.position(name) {
            Some(i) => self.values.swap_remove(i),
            None => self.input.clone(),
        }
    }

    /// Running statistics computed in train mode, by slot name.
    pub fn running_updates(&self) -> &[(String, Tensor<T>)] {
        &self.running
    }

    pub fn apply_running(&self, params: &mut ParamStore<T>) -> Result<()> {
        for (name, t) in &self.running {
            params.upsert(name, t.clone())?;
        }
        Ok(())
    }

    /// Reverse pass seeded with `∂L/∂value` for some nodes (usually the
    /// outputs). Trainable slots that receive no gradient get zeros.
    pub fn backward(
        &self,
        params: &ParamStore<T>,
        seeds: &[(&str, &Tensor<T>)],
    ) -> Result<Gradients<T>> {
        let g = self.graph;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; g.nodes().len()];
        let mut grad_input: Option<Tensor<T>> = None;
        for (name, seed) in seeds {
            let target = self
                .value(name)
                .ok_or_else(|| Error::InvalidGraph(alloc::format!("unknown seed `{name}`")))?;
            if target.shape() != seed.shape() {
                return Err(Error::ShapeMismatch {
                    context: "backward seed",
                    expected: target.shape().to_vec(),
                    actual: seed.shape().to_vec(),
                });
            }
            let slot = match g.position(name) {
                Some(i) => &mut grads[i],
                None => &mut grad_input,
            };
            accumulate(slot, (*seed).clone())?;
        }

        let mut pgrads: ParamStore<T> = ParamStore::new();
        for (i, node) in g.nodes().iter().enumerate().rev() {
            let Some(gy) = grads[i].take() else {
                continue;
            };
            let (gin, gp) = self
                .node_backward(i, node, params, &gy)
                .map_err(|e| e.at(&node.name))?;
            for (src, gx) in node.inputs.iter().zip(gin) {
                let slot = match g.position(src) {
                    Some(j) => &mut grads[j],
                    None => &mut grad_input,
                };
                accumulate(slot, gx)?;
            }
            for (role, t) in gp {
                pgrads.insert(node.slot_name(role), t)?;
            }
        }

        let mut out = ParamStore::new();
        for slot in g.param_slots() {
            if slot.role.is_buffer() {
                continue;
            }
            let t = match pgrads.get(&slot.name) {
                Some(t) => t.clone(),
                None => Tensor::zeros(slot.shape.clone()),
            };
            out.insert(slot.name, t)?;
        }
        Ok(Gradients {
            params: out,
            input: grad_input.unwrap_or_else(|| Tensor::zeros(self.input.shape().to_vec())),
        })
    }

    #[allow(clippy::type_complexity)]
    fn node_backward(
        &self,
        i: usize,
        node: &LayerNode,
        params: &ParamStore<T>,
        gy: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Vec<(SlotRole, Tensor<T>)>)> {
        let x = self.source(&node.inputs[0]);
        Ok(match &node.kind {
            LayerKind::Conv { cfg, bias, .. } => {
                let w = param(params, node, SlotRole::Weight)?;
                let gr = ops::conv_backward(x, w, cfg, gy)?;
                let mut ps = vec![(SlotRole::Weight, gr.weight)];
                if *bias {
                    ps.push((SlotRole::Bias, gr.bias));
                }
                (vec![gr.input], ps)
            }
            LayerKind::Acs { cfg, bias, variant } => {
                let w = param(params, node, SlotRole::Weight)?;
                let (gx, gw, gb, gl) = match variant {
                    AcsVariant::Split => {
                        let k = AcsKernel::new(w.clone(), None)?;
                        let gr = acs_conv_backward(x, &k, cfg, gy)?;
                        let gb = crate::acs::channel_sums(gy);
                        (gr.input, gr.weight, gb, None)
                    }
                    AcsVariant::Mean => {
                        let gr = mean_acs_conv_backward(x, w, cfg, gy)?;
                        (gr.input, gr.weight, gr.bias, None)
                    }
                    AcsVariant::Soft => {
                        let soft = soft_weights(param(params, node, SlotRole::Logits)?)?;
                        let gr = soft_acs_conv_backward(x, w, &soft, cfg, gy)?;
                        (gr.input, gr.weight, gr.bias, Some(gr.logits))
                    }
                };
                let mut ps = vec![(SlotRole::Weight, gw)];
                if *bias {
                    ps.push((SlotRole::Bias, gb));
                }
                if let Some(l) = gl {
                    ps.push((SlotRole::Logits, Tensor::new([3], l.to_vec())?));
                }
                (vec![gx], ps)
            }
            LayerKind::BatchNorm { .. } => {
                let Cache::BatchNorm(cache) = &self.caches[i] else {
                    unreachable!("batchnorm node without batchnorm cache")
                };
                let gamma = param(params, node, SlotRole::Gamma)?;
                let gr = ops::batchnorm_backward(x, gamma, cache, gy)?;
                (
                    vec![gr.input],
                    vec![(SlotRole::Gamma, gr.gamma), (SlotRole::Beta, gr.beta)],
                )
            }
            LayerKind::GroupNorm { groups, .. } => {
                let Cache::GroupNorm(cache) = &self.caches[i] else {
                    unreachable!("groupnorm node without groupnorm cache")
                };
                let gamma = param(params, node, SlotRole::Gamma)?;
                let gr = ops::groupnorm_backward(x, gamma, *groups, cache, gy)?;
                (
                    vec![gr.input],
                    vec![(SlotRole::Gamma, gr.gamma), (SlotRole::Beta, gr.beta)],
                )
            }
            LayerKind::MaxPool(p) => {
                let Cache::Pool(cache) = &self.caches[i] else {
                    unreachable!("max pool node without pool cache")
                };
                (
                    vec![ops::pool3d_backward(x, PoolMode::Max, p, cache, gy)?],
                    vec![],
                )
            }
            LayerKind::AvgPool(p) => {
                let cache = ops::PoolCache::default();
                (
                    vec![ops::pool3d_backward(x, PoolMode::Avg, p, &cache, gy)?],
                    vec![],
                )
            }
            LayerKind::Relu => (vec![ops::relu_backward(x, gy)?], vec![]),
            LayerKind::Add => (vec![gy.clone(); node.inputs.len()], vec![]),
            LayerKind::Concat => {
                let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|s| self.source(s)).collect();
                (ops::concat_channels_backward(&ins, gy)?, vec![])
            }
            LayerKind::UpsampleNearest(f) => {
                (vec![ops::upsample_nearest_backward(x, *f, gy)?], vec![])
            }
            LayerKind::GlobalAvgPool => (vec![ops::global_avg_pool_backward(x, gy)?], vec![]),
            LayerKind::Linear { bias, .. } => {
                let w = param(params, node, SlotRole::Weight)?;
                let gr = ops::linear_backward(x, w, gy)?;
                let mut ps = vec![(SlotRole::Weight, gr.weight)];
                if *bias {
                    ps.push((SlotRole::Bias, gr.bias));
                }
                (vec![gr.input], ps)
            }
        })
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Forward in train mode followed by a backward pass seeded at the first
/// output; returns the output and the gradients.
pub fn backward<T: Real>(
    g: &ModelGraph,
    params: &ParamStore<T>,
    x: &Tensor<T>,
    mode: NormMode,
    grad_output: &Tensor<T>,
) -> Result<(Tensor<T>, Gradients<T>)> {
    let fw = forward(g, params, x, mode)?;
    let out = &g.outputs()[0];
    let grads = fw.backward(params, &[(out.as_str(), grad_output)])?;
    Ok((fw.outputs()[0].clone(), grads))
}

//! Declarative network graphs, 2D→3D conversion, weight transfer and a
//! small tape-based executor.
//!
//! A graph is an ordered list of nodes. Each node names its predecessors;
//! the graph input is a virtual source referenced by [`ModelGraph::input`].
//! Node order is a topological order and is checked by [`ModelGraph::new`].
//!
//! Parameters live outside the graph in a name-keyed store. A node `n`
//! owns slots `n.weight`, `n.bias`, `n.running_mean`, `n.running_var` and
//! `n.logits` as its kind requires (see [`LayerNode::param_slots`]).

mod convert;
mod exec;
mod oracle;
mod shapes;
mod transfer;
mod unet;

pub use convert::{convert_graph, ConvertMode, ConvertOptions, PoolDepth};
pub use exec::{backward, forward, Forward, Gradients};
pub use oracle::embed_block_sparse;
pub use shapes::infer_shapes;
pub(crate) use shapes::node_shape;
pub use transfer::{inflate_kernel, init_params, init_slot, transfer_weights, Scope};
pub use unet::{toy_unet, UNetSpec};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{ConvConfig, PoolConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    D2,
    D3,
}

impl Dim {
    pub fn name(self) -> &'static str {
        match self {
            Dim::D2 => "2d",
            Dim::D3 => "3d",
        }
    }

    /// Rank of activations, batch and channel axes included.
    pub fn rank(self) -> usize {
        match self {
            Dim::D2 => 4,
            Dim::D3 => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AcsVariant {
    Split,
    Mean,
    Soft,
}

/// Where a convolution kernel comes from during weight transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelSource {
    /// Same elements as the source kernel; unit axes may be inserted.
    Direct,
    /// The 2D kernel repeated along a spatial axis (0 = D, 1 = H, 2 = W)
    /// and divided by the repeat count.
    Inflate(usize),
    /// Never transferred; always freshly initialized.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv {
        cfg: ConvConfig,
        bias: bool,
        source: KernelSource,
    },
    Acs {
        cfg: ConvConfig,
        bias: bool,
        variant: AcsVariant,
    },
    BatchNorm {
        channels: usize,
        eps: f64,
        momentum: f64,
    },
    GroupNorm {
        channels: usize,
        groups: usize,
        eps: f64,
    },
    MaxPool(PoolConfig),
    AvgPool(PoolConfig),
    Relu,
    Add,
    Concat,
    UpsampleNearest([usize; 3]),
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
        bias: bool,
    },
}

impl LayerKind {
    /// The kind name used in model files.
    pub fn name(&self, dim: Dim) -> &'static str {
        match self {
            LayerKind::Conv { cfg, .. } => match dim {
                Dim::D3 => "conv3d",
                Dim::D2 if cfg.kernel == [1, 1, 1] => "conv_1x1",
                Dim::D2 => "conv_kxk",
            },
            LayerKind::Acs { variant, .. } => match variant {
                AcsVariant::Split => "acs_conv",
                AcsVariant::Mean => "mean_acs_conv",
                AcsVariant::Soft => "soft_acs_conv",
            },
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::GroupNorm { .. } => "groupnorm",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPool(_) => "avgpool",
            LayerKind::Relu => "relu",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
            LayerKind::UpsampleNearest(_) => "upsample_nearest",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Linear { .. } => "linear",
        }
    }

    fn arity(&self) -> (usize, usize) {
        match self {
            LayerKind::Add => (2, usize::MAX),
            LayerKind::Concat => (1, usize::MAX),
            _ => (1, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotRole {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
    Logits,
}

impl SlotRole {
    /// Running statistics are state, not trainable parameters.
    pub fn is_buffer(self) -> bool {
        matches!(self, SlotRole::RunningMean | SlotRole::RunningVar)
    }

    pub fn suffix(self) -> &'static str {
        match self {
            SlotRole::Weight | SlotRole::Gamma => "weight",
            SlotRole::Bias | SlotRole::Beta => "bias",
            SlotRole::RunningMean => "running_mean",
            SlotRole::RunningVar => "running_var",
            SlotRole::Logits => "logits",
        }
    }
}

/// A named parameter slot with its declared shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub role: SlotRole,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNode {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
}

impl LayerNode {
    pub fn new(name: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind,
            inputs: inputs.iter().map(|s| String::from(*s)).collect(),
        }
    }

    pub fn slot_name(&self, role: SlotRole) -> String {
        format!("{}.{}", self.name, role.suffix())
    }

    /// Declared slots. 2D convolution kernels are `(C_o, C_i, K_h, K_w)`,
    /// 3D ones `(C_o, C_i, K_d, K_h, K_w)`; ACS kernels are always 2D.
    pub fn param_slots(&self, dim: Dim) -> Vec<ParamSlot> {
        let slot = |role: SlotRole, shape: Vec<usize>| ParamSlot {
            name: self.slot_name(role),
            role,
            shape,
        };
        let mut out = Vec::new();
        match &self.kind {
            LayerKind::Conv { cfg, bias, .. } => {
                let k = cfg.kernel;
                let shape = match dim {
                    Dim::D2 => vec![cfg.out_channels, cfg.in_channels, k[1], k[2]],
                    Dim::D3 => vec![cfg.out_channels, cfg.in_channels, k[0], k[1], k[2]],
                };
                out.push(slot(SlotRole::Weight, shape));
                if *bias {
                    out.push(slot(SlotRole::Bias, vec![cfg.out_channels]));
                }
            }
            LayerKind::Acs { cfg, bias, variant } => {
                let k = cfg.kernel[0];
                out.push(slot(
                    SlotRole::Weight,
                    vec![cfg.out_channels, cfg.in_channels, k, k],
                ));
                if *bias {
                    out.push(slot(SlotRole::Bias, vec![cfg.out_channels]));
                }
                if *variant == AcsVariant::Soft {
                    out.push(slot(SlotRole::Logits, vec![3]));
                }
            }
            LayerKind::BatchNorm { channels, .. } => {
                out.push(slot(SlotRole::Gamma, vec![*channels]));
                out.push(slot(SlotRole::Beta, vec![*channels]));
                out.push(slot(SlotRole::RunningMean, vec![*channels]));
                out.push(slot(SlotRole::RunningVar, vec![*channels]));
            }
            LayerKind::GroupNorm { channels, .. } => {
                out.push(slot(SlotRole::Gamma, vec![*channels]));
                out.push(slot(SlotRole::Beta, vec![*channels]));
            }
            LayerKind::Linear {
                in_features,
                out_features,
                bias,
            } => {
                out.push(slot(SlotRole::Weight, vec![*out_features, *in_features]));
                if *bias {
                    out.push(slot(SlotRole::Bias, vec![*out_features]));
                }
            }
            _ => {}
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    dim: Dim,
    nodes: Vec<LayerNode>,
    input: String,
    outputs: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl ModelGraph {
    /// Validates names, references, arity, per-dimensionality kinds and the
    /// topological order.
    pub fn new(
        dim: Dim,
        input: impl Into<String>,
        nodes: Vec<LayerNode>,
        outputs: Vec<String>,
    ) -> Result<Self> {
        let input = input.into();
        if input.is_empty() {
            return Err(Error::InvalidGraph("input name is empty".into()));
        }
        let mut index = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.name.is_empty() {
                return Err(Error::InvalidGraph(format!("node {i} has an empty name")));
            }
            if node.name == input || index.contains_key(&node.name) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate node name `{}`",
                    node.name
                )));
            }
            let (lo, hi) = node.kind.arity();
            if node.inputs.len() < lo || node.inputs.len() > hi {
                return Err(Error::InvalidGraph(format!(
                    "node `{}` ({}) takes {} input(s), got {}",
                    node.name,
                    node.kind.name(dim),
                    if lo == hi {
                        format!("{lo}")
                    } else {
                        format!("at least {lo}")
                    },
                    node.inputs.len()
                )));
            }
            for src in &node.inputs {
                if *src != input && !index.contains_key(src) {
                    return Err(Error::InvalidGraph(format!(
                        "node `{}` reads `{src}`, which is not defined before it",
                        node.name
                    )));
                }
            }
            check_kind(dim, node)?;
            index.insert(node.name.clone(), i);
        }
        if outputs.is_empty() {
            return Err(Error::InvalidGraph("graph has no outputs".into()));
        }
        for o in &outputs {
            if *o != input && !index.contains_key(o) {
                return Err(Error::InvalidGraph(format!("unknown output `{o}`")));
            }
        }
        let g = Self {
            dim,
            nodes,
            input,
            outputs,
            index,
        };
        let mut seen = BTreeMap::new();
        for slot in g.param_slots() {
            if seen.insert(slot.name.clone(), ()).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "parameter slot `{}` is declared twice",
                    slot.name
                )));
            }
        }
        Ok(g)
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn input(&self) -> &str {
        &self.input
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn node(&self, name: &str) -> Option<&LayerNode> {
        self.index.get(name).map(|&i| &self.nodes[i])
    }

    pub(crate) fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// All parameter slots in node order.
    pub fn param_slots(&self) -> Vec<ParamSlot> {
        self.nodes
            .iter()
            .flat_map(|n| n.param_slots(self.dim))
            .collect()
    }

    /// Trainable elements (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.param_slots()
            .iter()
            .filter(|s| !s.role.is_buffer())
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }
}

fn check_kind(dim: Dim, node: &LayerNode) -> Result<()> {
    let unsupported = || Error::UnsupportedKind {
        node: node.name.clone(),
        kind: String::from(node.kind.name(dim)),
    };
    let planar_pool = |p: &PoolConfig| p.window[0] == 1 && p.stride[0] == 1 && p.padding[0] == 0;
    match (&node.kind, dim) {
        (LayerKind::Acs { .. }, Dim::D2) => return Err(unsupported()),
        (LayerKind::Conv { cfg, source, .. }, Dim::D2) => {
            if !cfg.is_planar() || cfg.dilation[0] != 1 || *source != KernelSource::Direct {
                return Err(Error::InvalidGraph(format!(
                    "2D convolution `{}` has depth attributes",
                    node.name
                )));
            }
        }
        (LayerKind::MaxPool(p) | LayerKind::AvgPool(p), Dim::D2) if !planar_pool(p) => {
            return Err(Error::InvalidGraph(format!(
                "2D pooling `{}` has depth attributes",
                node.name
            )));
        }
        (LayerKind::UpsampleNearest(f), Dim::D2) if f[0] != 1 => {
            return Err(Error::InvalidGraph(format!(
                "2D upsampling `{}` has a depth factor",
                node.name
            )));
        }
        (LayerKind::Acs { cfg, .. }, Dim::D3) => {
            let k = cfg.kernel[0];
            let symmetric = cfg.padding.iter().all(|&(b, a)| b == a);
            if cfg.kernel != [k; 3] || !symmetric {
                return Err(Error::InvalidGraph(format!(
                    "ACS node `{}` needs a cubic kernel with symmetric padding",
                    node.name
                )));
            }
        }
        _ => {}
    }
    match &node.kind {
        LayerKind::Conv { cfg, .. } | LayerKind::Acs { cfg, .. } => cfg
            .validate()
            .and_then(|_| {
                if cfg.in_channels == 0 || cfg.out_channels == 0 {
                    Err(Error::InvalidConfig(
                        "channel counts must be positive".into(),
                    ))
                } else {
                    Ok(())
                }
            })
            .map_err(|e| e.at(&node.name)),
        LayerKind::GroupNorm {
            channels, groups, ..
        } if *groups == 0 || channels % groups != 0 => Err(Error::InvalidConfig(format!(
            "{channels} channels cannot be split into {groups} groups"
        ))
        .at(&node.name)),
        LayerKind::UpsampleNearest(f) if f.contains(&0) => {
            Err(Error::InvalidConfig("upsampling factors must be positive".into()).at(&node.name))
        }
        _ => Ok(()),
    }
}

//! 2D → 3D operator conversion.
//!
//! | 2D node        | 3D node                                                 |
//! |----------------|---------------------------------------------------------|
//! | `conv_kxk`     | ACS / Mean-ACS / Soft-ACS `K×K×K`, Conv3D `1×K×K`, or Conv3D `K×K×K` (inflated or random) |
//! | `conv_1x1`     | Conv3D `1×1×1`                                          |
//! | norms          | same per-channel parameters                             |
//! | pools `K×K`    | `1×K×K` or `K×K×K`                                      |
//! | upsampling     | depth factor 1, or matching the pools under `K×K×K`     |
//!
//! Node names, edges and order are preserved, so weights transfer by name.

use alloc::string::String;

use super::{AcsVariant, Dim, KernelSource, LayerKind, LayerNode, ModelGraph};
use crate::error::{Error, Result};
use crate::ops::{ConvConfig, PoolConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvertMode {
    Acs,
    MeanAcs,
    SoftAcs,
    /// Conv3D `1×K×K`.
    P25d,
    /// Conv3D `K×K×K`, kernel inflated from 2D.
    I3d,
    /// Conv3D `K×K×K`, freshly initialized.
    Conv3dRandom,
}

impl ConvertMode {
    pub const ALL: [ConvertMode; 6] = [
        ConvertMode::Acs,
        ConvertMode::MeanAcs,
        ConvertMode::SoftAcs,
        ConvertMode::P25d,
        ConvertMode::I3d,
        ConvertMode::Conv3dRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvertMode::Acs => "acs",
            ConvertMode::MeanAcs => "mean_acs",
            ConvertMode::SoftAcs => "soft_acs",
            ConvertMode::P25d => "p25d",
            ConvertMode::I3d => "i3d",
            ConvertMode::Conv3dRandom => "conv3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Depth extent of converted pooling windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum PoolDepth {
    /// `1×K×K`: depth resolution is kept.
    #[default]
    One,
    /// `K×K×K`: pools (and the matching upsampling) act isotropically.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvertOptions {
    pub mode: ConvertMode,
    pub pool_depth: PoolDepth,
    /// Lift convolution strides onto the depth axis (`(s,s,s)` instead of
    /// `(1,s,s)`).
    pub depth_stride: bool,
    /// Spatial axis the `i3d` kernels are repeated along.
    pub inflate_axis: usize,
}

impl ConvertOptions {
    pub fn new(mode: ConvertMode) -> Self {
        Self {
            mode,
            pool_depth: PoolDepth::One,
            depth_stride: false,
            inflate_axis: 0,
        }
    }

    pub fn with_pool_depth(mut self, pool_depth: PoolDepth) -> Self {
        self.pool_depth = pool_depth;
        self
    }
}

/// Lifts a planar configuration onto a depth axis with the given kernel
/// extent. Depth padding follows the depth kernel: `p` for a `K`-deep
/// kernel, none for a unit-depth one, so stride-1 "same" convolutions stay
/// "same" in depth.
fn lift_conv(cfg: &ConvConfig, depth_kernel: usize, opts: &ConvertOptions) -> ConvConfig {
    let mut out = *cfg;
    out.kernel[0] = depth_kernel;
    out.stride[0] = if opts.depth_stride { cfg.stride[1] } else { 1 };
    if depth_kernel == 1 {
        out.padding[0] = (0, 0);
        out.dilation[0] = 1;
    } else {
        out.padding[0] = cfg.padding[1];
        out.dilation[0] = cfg.dilation[1];
    }
    out
}

fn lift_pool(p: &PoolConfig, depth: PoolDepth) -> PoolConfig {
    let mut out = *p;
    if depth == PoolDepth::Full {
        out.window[0] = p.window[1];
        out.stride[0] = p.stride[1];
        out.padding[0] = p.padding[1];
    }
    out
}

fn convert_kind(node: &LayerNode, opts: &ConvertOptions) -> Result<LayerKind> {
    Ok(match &node.kind {
        LayerKind::Conv { cfg, bias, .. } => {
            let bias = *bias;
            let k = cfg.kernel[1];
            if cfg.kernel[1] != cfg.kernel[2] {
                return Err(Error::UnsupportedKind {
                    node: node.name.clone(),
                    kind: alloc::format!("conv {}x{}", cfg.kernel[1], cfg.kernel[2]),
                });
            }
            if k == 1 {
                return Ok(LayerKind::Conv {
                    cfg: lift_conv(cfg, 1, opts),
                    bias,
                    source: KernelSource::Direct,
                });
            }
            let acs = |variant| LayerKind::Acs {
                cfg: lift_conv(cfg, k, opts),
                bias,
                variant,
            };
            match opts.mode {
                ConvertMode::Acs => acs(AcsVariant::Split),
                ConvertMode::MeanAcs => acs(AcsVariant::Mean),
                ConvertMode::SoftAcs => acs(AcsVariant::Soft),
                ConvertMode::P25d => LayerKind::Conv {
                    cfg: lift_conv(cfg, 1, opts),
                    bias,
                    source: KernelSource::Direct,
                },
                ConvertMode::I3d | ConvertMode::Conv3dRandom => {
                    let source = if opts.mode == ConvertMode::I3d {
                        KernelSource::Inflate(opts.inflate_axis)
                    } else {
                        KernelSource::Random
                    };
                    LayerKind::Conv {
                        cfg: lift_conv(cfg, k, opts),
                        bias,
                        source,
                    }
                }
            }
        }
        LayerKind::MaxPool(p) => LayerKind::MaxPool(lift_pool(p, opts.pool_depth)),
        LayerKind::AvgPool(p) => LayerKind::AvgPool(lift_pool(p, opts.pool_depth)),
        LayerKind::UpsampleNearest(f) => {
            let mut f = *f;
            if opts.pool_depth == PoolDepth::Full {
                f[0] = f[1];
            }
            LayerKind::UpsampleNearest(f)
        }
        LayerKind::Acs { .. } => {
            return Err(Error::UnsupportedKind {
                node: node.name.clone(),
                kind: String::from(node.kind.name(Dim::D2)),
            })
        }
        other => other.clone(),
    })
}

/// Converts a 2D graph node for node.
pub fn convert_graph(g: &ModelGraph, opts: &ConvertOptions) -> Result<ModelGraph> {
    if g.dim() != Dim::D2 {
        return Err(Error::InvalidGraph(
            "only 2D graphs can be converted".into(),
        ));
    }
    if opts.inflate_axis > 2 {
        return Err(Error::InvalidConfig(
            "inflation axis must be 0, 1 or 2".into(),
        ));
    }
    let nodes = g
        .nodes()
        .iter()
        .map(|n| {
            Ok(LayerNode {
                name: n.name.clone(),
                kind: convert_kind(n, opts)?,
                inputs: n.inputs.clone(),
            })
        })
        .collect::<Result<_>>()?;
    ModelGraph::new(Dim::D3, g.input(), nodes, g.outputs().to_vec())
}

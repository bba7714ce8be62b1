//! JSON model description files. The schema is documented in
//! `docs/model-schema.md`; unknown fields are rejected at every level.

use std::path::Path;

use acs_core::graph::{AcsVariant, Dim, KernelSource, LayerKind, LayerNode, ModelGraph};
use acs_core::ops::{ConvConfig, PoolConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("node `{node}`: {msg}")]
    Schema { node: String, msg: String },
    #[error(transparent)]
    Graph(#[from] acs_core::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub dimensionality: String,
    pub input: String,
    pub nodes: Vec<NodeEntry>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub attrs: Map<String, Value>,
    pub inputs: Vec<String>,
}

/// A per-axis value given either once for all axes or once per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Axes {
    One(usize),
    Many(Vec<usize>),
}

impl Axes {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<usize>, String> {
        match self {
            Axes::One(v) => Ok(vec![*v; n]),
            Axes::Many(v) if v.len() == n => Ok(v.clone()),
            Axes::Many(v) => Err(format!("`{what}` needs {n} values, got {}", v.len())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Pad {
    Symmetric(usize),
    Pair([usize; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Pads {
    One(usize),
    Many(Vec<Pad>),
}

impl Pads {
    fn expand(&self, n: usize) -> Result<Vec<(usize, usize)>, String> {
        match self {
            Pads::One(p) => Ok(vec![(*p, *p); n]),
            Pads::Many(v) if v.len() == n => Ok(v
                .iter()
                .map(|p| match p {
                    Pad::Symmetric(p) => (*p, *p),
                    Pad::Pair([b, a]) => (*b, *a),
                })
                .collect()),
            Pads::Many(v) => Err(format!("`padding` needs {n} values, got {}", v.len())),
        }
    }
}

fn one() -> Axes {
    Axes::One(1)
}

fn zero() -> Axes {
    Axes::One(0)
}

fn no_pad() -> Pads {
    Pads::One(0)
}

fn bn_eps() -> f64 {
    1e-5
}

fn bn_momentum() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvAttrs {
    in_channels: usize,
    out_channels: usize,
    kernel: Axes,
    #[serde(default = "one")]
    stride: Axes,
    #[serde(default = "no_pad")]
    padding: Pads,
    #[serde(default = "one")]
    dilation: Axes,
    #[serde(default)]
    bias: bool,
    /// `direct`, `random`, or `inflate_d` / `inflate_h` / `inflate_w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchNormAttrs {
    channels: usize,
    #[serde(default = "bn_eps")]
    eps: f64,
    #[serde(default = "bn_momentum")]
    momentum: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupNormAttrs {
    channels: usize,
    groups: usize,
    #[serde(default = "bn_eps")]
    eps: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolAttrs {
    window: Axes,
    /// Defaults to the window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<Axes>,
    #[serde(default = "zero")]
    padding: Axes,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpsampleAttrs {
    factor: Axes,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearAttrs {
    in_features: usize,
    out_features: usize,
    #[serde(default = "yes")]
    bias: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoAttrs {}

fn parse_dim(s: &str) -> Option<Dim> {
    match s {
        "2d" => Some(Dim::D2),
        "3d" => Some(Dim::D3),
        _ => None,
    }
}

fn source_name(s: KernelSource) -> Option<String> {
    match s {
        KernelSource::Direct => None,
        KernelSource::Random => Some("random".into()),
        KernelSource::Inflate(a) => Some(format!("inflate_{}", ["d", "h", "w"][a.min(2)])),
    }
}

fn parse_source(s: Option<&str>) -> Result<KernelSource, String> {
    match s {
        None | Some("direct") => Ok(KernelSource::Direct),
        Some("random") => Ok(KernelSource::Random),
        Some("inflate_d") => Ok(KernelSource::Inflate(0)),
        Some("inflate_h") => Ok(KernelSource::Inflate(1)),
        Some("inflate_w") => Ok(KernelSource::Inflate(2)),
        Some(other) => Err(format!("unknown kernel source `{other}`")),
    }
}

/// Spatial axes written for a graph of this dimensionality; 2D files omit
/// the depth axis.
fn spatial(dim: Dim) -> std::ops::Range<usize> {
    match dim {
        Dim::D2 => 1..3,
        Dim::D3 => 0..3,
    }
}

fn to_value<T: Serialize>(v: T) -> Map<String, Value> {
    match serde_json::to_value(v).expect("attrs serialize") {
        Value::Object(m) => m,
        _ => unreachable!("attrs are structs"),
    }
}

fn conv_attrs(
    cfg: &ConvConfig,
    dim: Dim,
    bias: bool,
    source: Option<String>,
) -> Map<String, Value> {
    let r = spatial(dim);
    to_value(ConvAttrs {
        in_channels: cfg.in_channels,
        out_channels: cfg.out_channels,
        kernel: Axes::Many(cfg.kernel[r.clone()].to_vec()),
        stride: Axes::Many(cfg.stride[r.clone()].to_vec()),
        padding: Pads::Many(
            cfg.padding[r.clone()]
                .iter()
                .map(|&(b, a)| Pad::Pair([b, a]))
                .collect(),
        ),
        dilation: Axes::Many(cfg.dilation[r].to_vec()),
        bias,
        source,
    })
}

fn pool_attrs(p: &PoolConfig, dim: Dim) -> Map<String, Value> {
    let r = spatial(dim);
    to_value(PoolAttrs {
        window: Axes::Many(p.window[r.clone()].to_vec()),
        stride: Some(Axes::Many(p.stride[r.clone()].to_vec())),
        padding: Axes::Many(p.padding[r].to_vec()),
    })
}

pub fn to_model_file(g: &ModelGraph) -> ModelFile {
    let dim = g.dim();
    let nodes = g
        .nodes()
        .iter()
        .map(|n| {
            let attrs = match &n.kind {
                LayerKind::Conv { cfg, bias, source } => {
                    conv_attrs(cfg, dim, *bias, source_name(*source))
                }
                LayerKind::Acs { cfg, bias, .. } => conv_attrs(cfg, dim, *bias, None),
                LayerKind::BatchNorm {
                    channels,
                    eps,
                    momentum,
                } => to_value(BatchNormAttrs {
                    channels: *channels,
                    eps: *eps,
                    momentum: *momentum,
                }),
                LayerKind::GroupNorm {
                    channels,
                    groups,
                    eps,
                } => to_value(GroupNormAttrs {
                    channels: *channels,
                    groups: *groups,
                    eps: *eps,
                }),
                LayerKind::MaxPool(p) | LayerKind::AvgPool(p) => pool_attrs(p, dim),
                LayerKind::UpsampleNearest(f) => to_value(UpsampleAttrs {
                    factor: Axes::Many(f[spatial(dim)].to_vec()),
                }),
                LayerKind::Linear {
                    in_features,
                    out_features,
                    bias,
                } => to_value(LinearAttrs {
                    in_features: *in_features,
                    out_features: *out_features,
                    bias: *bias,
                }),
                LayerKind::Relu | LayerKind::Add | LayerKind::Concat | LayerKind::GlobalAvgPool => {
                    Map::new()
                }
            };
            NodeEntry {
                name: n.name.clone(),
                kind: n.kind.name(dim).into(),
                attrs,
                inputs: n.inputs.clone(),
            }
        })
        .collect();
    ModelFile {
        version: FORMAT_VERSION,
        dimensionality: dim.name().into(),
        input: g.input().into(),
        nodes,
        outputs: g.outputs().to_vec(),
    }
}

fn attrs<T: DeserializeOwned>(node: &NodeEntry) -> Result<T, String> {
    serde_json::from_value(Value::Object(node.attrs.clone())).map_err(|e| format!("attrs: {e}"))
}

/// Pads a list of spatial values out to three axes.
fn lift<T: Copy>(v: Vec<T>, depth: T) -> [T; 3] {
    match v.as_slice() {
        [h, w] => [depth, *h, *w],
        [d, h, w] => [*d, *h, *w],
        _ => unreachable!("expanded to 2 or 3 axes"),
    }
}

fn conv_config(a: &ConvAttrs, n: usize) -> Result<ConvConfig, String> {
    Ok(ConvConfig {
        kernel: lift(a.kernel.expand(n, "kernel")?, 1),
        stride: lift(a.stride.expand(n, "stride")?, 1),
        padding: lift(a.padding.expand(n)?, (0, 0)),
        dilation: lift(a.dilation.expand(n, "dilation")?, 1),
        in_channels: a.in_channels,
        out_channels: a.out_channels,
    })
}

fn node_kind(node: &NodeEntry, dim: Dim) -> Result<LayerKind, String> {
    let n = spatial(dim).len();
    let kind = match (node.kind.as_str(), dim) {
        ("conv_kxk" | "conv_1x1", Dim::D2) | ("conv3d", Dim::D3) => {
            let a: ConvAttrs = attrs(node)?;
            if dim == Dim::D2 && a.source.is_some() {
                return Err("`source` is only valid on conv3d".into());
            }
            let cfg = conv_config(&a, n)?;
            if node.kind == "conv_1x1" && cfg.kernel != [1, 1, 1] {
                return Err("conv_1x1 needs a 1×1 kernel".into());
            }
            LayerKind::Conv {
                cfg,
                bias: a.bias,
                source: parse_source(a.source.as_deref())?,
            }
        }
        ("acs_conv" | "mean_acs_conv" | "soft_acs_conv", Dim::D3) => {
            let a: ConvAttrs = attrs(node)?;
            if a.source.is_some() {
                return Err("`source` is only valid on conv3d".into());
            }
            let variant = match node.kind.as_str() {
                "acs_conv" => AcsVariant::Split,
                "mean_acs_conv" => AcsVariant::Mean,
                _ => AcsVariant::Soft,
            };
            LayerKind::Acs {
                cfg: conv_config(&a, n)?,
                bias: a.bias,
                variant,
            }
        }
        ("batchnorm", _) => {
            let a: BatchNormAttrs = attrs(node)?;
            LayerKind::BatchNorm {
                channels: a.channels,
                eps: a.eps,
                momentum: a.momentum,
            }
        }
        ("groupnorm", _) => {
            let a: GroupNormAttrs = attrs(node)?;
            LayerKind::GroupNorm {
                channels: a.channels,
                groups: a.groups,
                eps: a.eps,
            }
        }
        ("maxpool" | "avgpool", _) => {
            let a: PoolAttrs = attrs(node)?;
            let window = a.window.expand(n, "window")?;
            let stride = match &a.stride {
                Some(s) => s.expand(n, "stride")?,
                None => window.clone(),
            };
            let cfg = PoolConfig::new(
                lift(window, 1),
                lift(stride, 1),
                lift(a.padding.expand(n, "padding")?, 0),
            );
            if node.kind == "maxpool" {
                LayerKind::MaxPool(cfg)
            } else {
                LayerKind::AvgPool(cfg)
            }
        }
        ("upsample_nearest", _) => {
            let a: UpsampleAttrs = attrs(node)?;
            LayerKind::UpsampleNearest(lift(a.factor.expand(n, "factor")?, 1))
        }
        ("linear", _) => {
            let a: LinearAttrs = attrs(node)?;
            LayerKind::Linear {
                in_features: a.in_features,
                out_features: a.out_features,
                bias: a.bias,
            }
        }
        ("relu" | "add" | "concat" | "global_avg_pool", _) => {
            let _: NoAttrs = attrs(node)?;
            match node.kind.as_str() {
                "relu" => LayerKind::Relu,
                "add" => LayerKind::Add,
                "concat" => LayerKind::Concat,
                _ => LayerKind::GlobalAvgPool,
            }
        }
        (other, dim) => return Err(format!("unknown kind `{other}` for a {} graph", dim.name())),
    };
    Ok(kind)
}

pub fn from_model_file(f: &ModelFile) -> Result<ModelGraph, ModelFileError> {
    if f.version != FORMAT_VERSION {
        return Err(ModelFileError::Version(f.version));
    }
    let dim = parse_dim(&f.dimensionality).ok_or_else(|| ModelFileError::Schema {
        node: "<graph>".into(),
        msg: format!(
            "dimensionality must be \"2d\" or \"3d\", got {:?}",
            f.dimensionality
        ),
    })?;
    let nodes = f
        .nodes
        .iter()
        .map(|n| {
            node_kind(n, dim)
                .map(|kind| LayerNode {
                    name: n.name.clone(),
                    kind,
                    inputs: n.inputs.clone(),
                })
                .map_err(|msg| ModelFileError::Schema {
                    node: n.name.clone(),
                    msg,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelGraph::new(
        dim,
        f.input.clone(),
        nodes,
        f.outputs.clone(),
    )?)
}

pub fn parse(text: &str) -> Result<ModelGraph, ModelFileError> {
    from_model_file(&serde_json::from_str(text)?)
}

pub fn to_string(g: &ModelGraph) -> String {
    let mut s = serde_json::to_string_pretty(&to_model_file(g)).expect("model files serialize");
    s.push('\n');
    s
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelGraph, ModelFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

pub fn save(g: &ModelGraph, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    std::fs::write(path, to_string(g)).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use acs_core::graph::{toy_unet, UNetSpec};

    #[test]
    fn unet_round_trips() {
        let g = toy_unet(UNetSpec::default()).unwrap();
        assert_eq!(parse(&to_string(&g)).unwrap(), g);
    }

    #[test]
    fn scalar_shorthand() {
        let text = r#"{"version": 1, "dimensionality": "3d", "input": "x", "outputs": ["c"],
            "nodes": [{"name": "c", "kind": "acs_conv", "inputs": ["x"],
                       "attrs": {"in_channels": 2, "out_channels": 3, "kernel": 3, "padding": 1}}]}"#;
        let g = parse(text).unwrap();
        assert_eq!(
            g.node("c").unwrap().kind,
            LayerKind::Acs {
                cfg: ConvConfig::cubic(2, 3, 3, 1, 1, 1),
                bias: false,
                variant: AcsVariant::Split
            }
        );
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let base = r#"{"version": 1, "dimensionality": "2d", "input": "x", "outputs": ["r"],
            "nodes": [{"name": "r", "kind": "relu", "inputs": ["x"]}]"#;
        assert!(parse(&format!("{base}}}")).is_ok());
        assert!(matches!(
            parse(&format!("{base}, \"extra\": 1}}")),
            Err(ModelFileError::Json(_))
        ));
        let bad_attr = base.replace(
            r#""kind": "relu""#,
            r#""kind": "relu", "attrs": {"slope": 0.1}"#,
        );
        let err = parse(&format!("{bad_attr}}}")).unwrap_err();
        assert!(err.to_string().contains("node `r`"), "{err}");
    }
}

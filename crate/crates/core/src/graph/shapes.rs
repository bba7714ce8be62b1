use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Dim, LayerKind, ModelGraph};
use crate::error::{Error, Result};

/// Output shape of every node for the given input shape, in node order.
/// Failures are reported against the offending node.
pub fn infer_shapes(g: &ModelGraph, input: &[usize]) -> Result<Vec<Vec<usize>>> {
    if input.len() != g.dim().rank() {
        return Err(Error::RankMismatch {
            expected: g.dim().rank(),
            actual: input.len(),
        });
    }
    if input.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "input shape {input:?} has a zero extent"
        )));
    }
    let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(g.nodes().len());
    for node in g.nodes() {
        let ins: Vec<&[usize]> = node
            .inputs
            .iter()
            .map(|src| match g.position(src) {
                Some(i) => shapes[i].as_slice(),
                None => input,
            })
            .collect();
        let out = node_shape(g.dim(), &node.kind, &ins).map_err(|e| e.at(&node.name))?;
        shapes.push(out);
    }
    Ok(shapes)
}

/// `[N, C, D, H, W]` view of a 2D or 3D activation shape.
fn volume(dim: Dim, s: &[usize]) -> Result<[usize; 5]> {
    match (dim, s.len()) {
        (Dim::D2, 4) => Ok([s[0], s[1], 1, s[2], s[3]]),
        (Dim::D3, 5) => Ok([s[0], s[1], s[2], s[3], s[4]]),
        _ => Err(Error::RankMismatch {
            expected: dim.rank(),
            actual: s.len(),
        }),
    }
}

fn spatial(dim: Dim, n: usize, c: usize, o: [usize; 3]) -> Vec<usize> {
    match dim {
        Dim::D2 => vec![n, c, o[1], o[2]],
        Dim::D3 => vec![n, c, o[0], o[1], o[2]],
    }
}

fn channels(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ChannelMismatch {
            context,
            expected,
            actual,
        })
    }
}

pub(crate) fn node_shape(dim: Dim, kind: &LayerKind, ins: &[&[usize]]) -> Result<Vec<usize>> {
    let x = ins[0];
    match kind {
        LayerKind::Conv { cfg, .. } | LayerKind::Acs { cfg, .. } => {
            let v = volume(dim, x)?;
            channels(cfg.in_channels, v[1], "convolution input")?;
            let o = cfg.output_extents([v[2], v[3], v[4]])?;
            Ok(spatial(dim, v[0], cfg.out_channels, o))
        }
        LayerKind::BatchNorm { channels: c, .. } | LayerKind::GroupNorm { channels: c, .. } => {
            let v = volume(dim, x)?;
            channels(*c, v[1], "normalization input")?;
            Ok(x.to_vec())
        }
        LayerKind::MaxPool(p) | LayerKind::AvgPool(p) => {
            let v = volume(dim, x)?;
            let o = p.output_extents([v[2], v[3], v[4]])?;
            Ok(spatial(dim, v[0], v[1], o))
        }
        LayerKind::Relu => Ok(x.to_vec()),
        LayerKind::Add => {
            for s in &ins[1..] {
                if *s != x {
                    return Err(Error::ShapeMismatch {
                        context: "add inputs",
                        expected: x.to_vec(),
                        actual: s.to_vec(),
                    });
                }
            }
            Ok(x.to_vec())
        }
        LayerKind::Concat => {
            let mut out = x.to_vec();
            for s in &ins[1..] {
                let same_rest = s.len() == x.len() && s[0] == x[0] && s[2..] == x[2..];
                if !same_rest {
                    return Err(Error::ShapeMismatch {
                        context: "concat inputs",
                        expected: x.to_vec(),
                        actual: s.to_vec(),
                    });
                }
                out[1] += s[1];
            }
            Ok(out)
        }
        LayerKind::UpsampleNearest(f) => {
            let v = volume(dim, x)?;
            Ok(spatial(
                dim,
                v[0],
                v[1],
                [v[2] * f[0], v[3] * f[1], v[4] * f[2]],
            ))
        }
        LayerKind::GlobalAvgPool => {
            let v = volume(dim, x)?;
            Ok(vec![v[0], v[1]])
        }
        LayerKind::Linear {
            in_features,
            out_features,
            ..
        } => {
            let f: usize = x[1..].iter().product();
            channels(*in_features, f, "linear features")?;
            Ok(vec![x[0], *out_features])
        }
    }
}

use alloc::vec;
use alloc::vec::Vec;

use super::conv::conv_output_extent;
use super::debug_finite;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{shape_like, volume_dims, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    /// Divides by the full window volume, padding included.
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolConfig {
    pub window: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl PoolConfig {
    pub fn new(window: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self {
            window,
            stride,
            padding,
        }
    }

    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            if self.window[a] == 0 || self.stride[a] == 0 {
                return Err(Error::InvalidConfig(
                    "pool window and stride must be positive".into(),
                ));
            }
            if self.padding[a] >= self.window[a] {
                return Err(Error::InvalidConfig(
                    "pool padding must be smaller than the window".into(),
                ));
            }
            let p = self.padding[a];
            out[a] = conv_output_extent(input[a], self.window[a], self.stride[a], (p, p), 1)
                .ok_or(Error::EmptyOutput {
                    axis: a,
                    input: input[a] + 2 * p,
                    kernel: self.window[a],
                })?;
        }
        Ok(out)
    }
}

/// Per-output source index for max pooling (flat index into the input);
/// empty for average pooling.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoolCache {
    argmax: Vec<usize>,
}

/// Max or average pooling over `(D, H, W)`; rank-4 inputs have a unit depth.
pub fn pool3d<T: Real>(
    x: &Tensor<T>,
    mode: PoolMode,
    cfg: &PoolConfig,
) -> Result<(Tensor<T>, PoolCache)> {
    let xd = volume_dims(x.shape(), "pool input")?;
    if x.rank() == 4 && (cfg.window[0] != 1 || cfg.stride[0] != 1 || cfg.padding[0] != 0) {
        return Err(Error::InvalidConfig(
            "rank-4 input needs a planar pooling window".into(),
        ));
    }
    let o = cfg.output_extents([xd[2], xd[3], xd[4]])?;
    let od = [xd[0], xd[1], o[0], o[1], o[2]];
    let in_vol = xd[2] * xd[3] * xd[4];
    let out_vol = o[0] * o[1] * o[2];
    let mut out = vec![T::zero(); xd[0] * xd[1] * out_vol];
    let mut argmax = match mode {
        PoolMode::Max => vec![0usize; out.len()],
        PoolMode::Avg => Vec::new(),
    };
    let window_size = T::count(cfg.window.iter().product());
    let xs = x.data();

    for nc in 0..xd[0] * xd[1] {
        let src = &xs[nc * in_vol..(nc + 1) * in_vol];
        for a in 0..o[0] {
            for b in 0..o[1] {
                for c in 0..o[2] {
                    let oi = nc * out_vol + (a * o[1] + b) * o[2] + c;
                    let mut best = T::neg_infinity();
                    let mut best_at = usize::MAX;
                    let mut sum = T::zero();
                    for_window(cfg, [a, b, c], [xd[2], xd[3], xd[4]], |flat| {
                        let v = src[flat];
                        sum += v;
                        if v > best || best_at == usize::MAX {
                            best = v;
                            best_at = flat;
                        }
                    });
                    match mode {
                        PoolMode::Max => {
                            out[oi] = best;
                            argmax[oi] = nc * in_vol + best_at;
                        }
                        PoolMode::Avg => out[oi] = sum / window_size,
                    }
                }
            }
        }
    }
    let out = Tensor::new(shape_like(x.shape(), od), out)?;
    debug_finite!(out, x);
    Ok((out, PoolCache { argmax }))
}

/// Visits in-bounds input positions of one window in scan order.
#[inline]
fn for_window(cfg: &PoolConfig, o: [usize; 3], dims: [usize; 3], mut f: impl FnMut(usize)) {
    for kd in 0..cfg.window[0] {
        let Some(id) = (o[0] * cfg.stride[0] + kd).checked_sub(cfg.padding[0]) else {
            continue;
        };
        if id >= dims[0] {
            continue;
        }
        for kh in 0..cfg.window[1] {
            let Some(ih) = (o[1] * cfg.stride[1] + kh).checked_sub(cfg.padding[1]) else {
                continue;
            };
            if ih >= dims[1] {
                continue;
            }
            for kw in 0..cfg.window[2] {
                let Some(iw) = (o[2] * cfg.stride[2] + kw).checked_sub(cfg.padding[2]) else {
                    continue;
                };
                if iw >= dims[2] {
                    continue;
                }
                f((id * dims[1] + ih) * dims[2] + iw);
            }
        }
    }
}

/// Max pooling routes each output gradient to the first maximal input in
/// scan order; average pooling spreads it uniformly over the window.
pub fn pool3d_backward<T: Real>(
    x: &Tensor<T>,
    mode: PoolMode,
    cfg: &PoolConfig,
    cache: &PoolCache,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let xd = volume_dims(x.shape(), "pool input")?;
    let o = cfg.output_extents([xd[2], xd[3], xd[4]])?;
    let expect = shape_like(x.shape(), [xd[0], xd[1], o[0], o[1], o[2]]);
    if grad_out.shape() != expect.as_slice() {
        return Err(Error::ShapeMismatch {
            context: "pool grad_out",
            expected: expect,
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut gx = vec![T::zero(); x.len()];
    let g = grad_out.data();
    match mode {
        PoolMode::Max => {
            if cache.argmax.len() != g.len() {
                return Err(Error::InvalidConfig("pool cache does not match".into()));
            }
            for (&src, &gv) in cache.argmax.iter().zip(g) {
                gx[src] += gv;
            }
        }
        PoolMode::Avg => {
            let in_vol = xd[2] * xd[3] * xd[4];
            let out_vol = o[0] * o[1] * o[2];
            let window_size = T::count(cfg.window.iter().product());
            for nc in 0..xd[0] * xd[1] {
                let dst = &mut gx[nc * in_vol..(nc + 1) * in_vol];
                for a in 0..o[0] {
                    for b in 0..o[1] {
                        for c in 0..o[2] {
                            let gv = g[nc * out_vol + (a * o[1] + b) * o[2] + c] / window_size;
                            for_window(cfg, [a, b, c], [xd[2], xd[3], xd[4]], |flat| {
                                dst[flat] += gv
                            });
                        }
                    }
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), gx)
}

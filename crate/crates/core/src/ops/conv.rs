use alloc::vec;
use alloc::vec::Vec;

use super::debug_finite;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{shape_like, volume_dims, Tensor};

/// Convolution geometry over the three spatial axes `(D, H, W)`.
///
/// Planar (2D) convolutions use a trivial depth axis: kernel 1, stride 1,
/// no padding, dilation 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvConfig {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    /// `(before, after)` per axis.
    pub padding: [(usize, usize); 3],
    pub dilation: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvConfig {
    /// `K×K×K` kernel with isotropic stride, symmetric padding and dilation.
    pub fn cubic(ci: usize, co: usize, k: usize, s: usize, p: usize, d: usize) -> Self {
        Self {
            kernel: [k; 3],
            stride: [s; 3],
            padding: [(p, p); 3],
            dilation: [d; 3],
            in_channels: ci,
            out_channels: co,
        }
    }

    /// `K×K` planar kernel (trivial depth axis).
    pub fn planar(ci: usize, co: usize, k: usize, s: usize, p: usize, d: usize) -> Self {
        Self {
            kernel: [1, k, k],
            stride: [1, s, s],
            padding: [(0, 0), (p, p), (p, p)],
            dilation: [1, d, d],
            in_channels: ci,
            out_channels: co,
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn is_planar(&self) -> bool {
        self.kernel[0] == 1 && self.stride[0] == 1 && self.padding[0] == (0, 0)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if self.kernel[a] == 0 || self.stride[a] == 0 || self.dilation[a] == 0 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "kernel, stride and dilation must be positive on axis {a}"
                )));
            }
        }
        Ok(())
    }

    /// Output spatial extents for the given input extents.
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = conv_output_extent(
                input[a],
                self.kernel[a],
                self.stride[a],
                self.padding[a],
                self.dilation[a],
            )
            .ok_or(Error::EmptyOutput {
                axis: a,
                input: input[a] + self.padding[a].0 + self.padding[a].1,
                kernel: self.dilation[a] * (self.kernel[a] - 1) + 1,
            })?;
        }
        Ok(out)
    }
}

/// `floor((I + pb + pa − d·(K−1) − 1) / s) + 1`, or `None` when the
/// effective kernel does not fit into the padded input.
pub fn conv_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    (pb, pa): (usize, usize),
    dilation: usize,
) -> Option<usize> {
    let padded = input + pb + pa;
    let eff = dilation * (kernel.checked_sub(1)?) + 1;
    if eff > padded || stride == 0 {
        return None;
    }
    Some((padded - eff) / stride + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Geometry {
    /// Padded input `N×C×D×H×W`.
    xp: [usize; 5],
    out: [usize; 5],
}

fn check<T: Real>(x: &Tensor<T>, w: &Tensor<T>, cfg: &ConvConfig) -> Result<Geometry> {
    cfg.validate()?;
    let xd = volume_dims(x.shape(), "conv input")?;
    if x.rank() == 4 && !cfg.is_planar() {
        return Err(Error::InvalidConfig(
            "rank-4 input needs a planar convolution config".into(),
        ));
    }
    if xd[1] != cfg.in_channels {
        return Err(Error::ChannelMismatch {
            context: "conv input",
            expected: cfg.in_channels,
            actual: xd[1],
        });
    }
    let wshape = if x.rank() == 4 {
        vec![
            cfg.out_channels,
            cfg.in_channels,
            cfg.kernel[1],
            cfg.kernel[2],
        ]
    } else {
        vec![
            cfg.out_channels,
            cfg.in_channels,
            cfg.kernel[0],
            cfg.kernel[1],
            cfg.kernel[2],
        ]
    };
    if w.shape() != wshape.as_slice() {
        return Err(Error::ShapeMismatch {
            context: "conv weight",
            expected: wshape,
            actual: w.shape().to_vec(),
        });
    }
    let o = cfg.output_extents([xd[2], xd[3], xd[4]])?;
    let p = cfg.padding;
    Ok(Geometry {
        xp: [
            xd[0],
            xd[1],
            xd[2] + p[0].0 + p[0].1,
            xd[3] + p[1].0 + p[1].1,
            xd[4] + p[2].0 + p[2].1,
        ],
        out: [xd[0], cfg.out_channels, o[0], o[1], o[2]],
    })
}

/// Zero-pads the spatial axes of an `N×C×D×H×W` buffer.
fn pad_spatial<T: Real>(x: &[T], xd: [usize; 5], pads: [(usize, usize); 3]) -> Vec<T> {
    if pads.iter().all(|&p| p == (0, 0)) {
        return x.to_vec();
    }
    let (dp, hp, wp) = (
        xd[2] + pads[0].0 + pads[0].1,
        xd[3] + pads[1].0 + pads[1].1,
        xd[4] + pads[2].0 + pads[2].1,
    );
    let mut out = vec![T::zero(); xd[0] * xd[1] * dp * hp * wp];
    for nc in 0..xd[0] * xd[1] {
        for d in 0..xd[2] {
            for h in 0..xd[3] {
                let src = ((nc * xd[2] + d) * xd[3] + h) * xd[4];
                let dst = ((nc * dp + d + pads[0].0) * hp + h + pads[1].0) * wp + pads[2].0;
                out[dst..dst + xd[4]].copy_from_slice(&x[src..src + xd[4]]);
            }
        }
    }
    out
}

fn crop_spatial<T: Real>(xp: &[T], xd: [usize; 5], pads: [(usize, usize); 3]) -> Vec<T> {
    if pads.iter().all(|&p| p == (0, 0)) {
        return xp.to_vec();
    }
    let (dp, hp, wp) = (
        xd[2] + pads[0].0 + pads[0].1,
        xd[3] + pads[1].0 + pads[1].1,
        xd[4] + pads[2].0 + pads[2].1,
    );
    let mut out = vec![T::zero(); xd.iter().product()];
    for nc in 0..xd[0] * xd[1] {
        for d in 0..xd[2] {
            for h in 0..xd[3] {
                let dst = ((nc * xd[2] + d) * xd[3] + h) * xd[4];
                let src = ((nc * dp + d + pads[0].0) * hp + h + pads[1].0) * wp + pads[2].0;
                out[dst..dst + xd[4]].copy_from_slice(&xp[src..src + xd[4]]);
            }
        }
    }
    out
}

/// Cross-correlation (no kernel flip) with optional per-output-channel bias.
///
/// Each output element accumulates input channels in order, then kernel
/// offsets in `(kd, kh, kw)` order, then adds the bias. The result is
/// bit-reproducible.
pub fn conv<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    cfg: &ConvConfig,
) -> Result<Tensor<T>> {
    let g = check(x, w, cfg)?;
    if let Some(b) = bias {
        if b.shape() != [cfg.out_channels] {
            return Err(Error::ShapeMismatch {
                context: "conv bias",
                expected: vec![cfg.out_channels],
                actual: b.shape().to_vec(),
            });
        }
    }
    let xd = volume_dims(x.shape(), "conv input")?;
    let xp = pad_spatial(x.data(), xd, cfg.padding);
    let mut out = vec![T::zero(); g.out.iter().product()];
    if cfg.stride == [1, 1, 1] {
        forward_unit_stride(&xp, g.xp, w.data(), cfg, &mut out, g.out);
    } else {
        forward_kernel(&xp, g.xp, w.data(), cfg, &mut out, g.out);
    }
    if let Some(b) = bias {
        let plane = g.out[2] * g.out[3] * g.out[4];
        for (i, chunk) in out.chunks_mut(plane.max(1)).enumerate() {
            let bv = b.data()[i % cfg.out_channels.max(1)];
            for v in chunk {
                *v += bv;
            }
        }
    }
    let out = Tensor::new(shape_like(x.shape(), g.out), out)?;
    debug_finite!(out, x, w);
    Ok(out)
}

const CO_BLOCK: usize = 4;
const TILE: usize = 1024;

/// Flat offset of kernel tap `(kd, kh, kw)` on the padded input grid.
fn tap_offset(cfg: &ConvConfig, hp: usize, wp: usize, kd: usize, kh: usize, kw: usize) -> usize {
    (kd * cfg.dilation[0] * hp + kh * cfg.dilation[1]) * wp + kw * cfg.dilation[2]
}

/// Stride-1 forward pass computed on the padded grid: output `(d, h, w)`
/// lives at `(d·Hp + h)·Wp + w`, so every kernel tap is one contiguous
/// axpy over the whole volume. Columns past `W_o` are discarded.
/// Accumulation order per element matches [`forward_kernel`].
fn forward_unit_stride<T: Real>(
    xp: &[T],
    xd: [usize; 5],
    w: &[T],
    cfg: &ConvConfig,
    out: &mut [T],
    od: [usize; 5],
) {
    let [n_batch, ci_n, _, hp, wp] = xd;
    let [_, co_n, d_o, h_o, w_o] = od;
    let [kd_n, kh_n, kw_n] = cfg.kernel;
    let kvol = kd_n * kh_n * kw_n;
    let in_vol = xd[2] * hp * wp;
    if d_o * h_o * w_o == 0 || co_n == 0 {
        return;
    }
    let span = (d_o - 1) * hp * wp + (h_o - 1) * wp + w_o;
    let offsets: Vec<usize> = (0..kd_n)
        .flat_map(|kd| (0..kh_n).flat_map(move |kh| (0..kw_n).map(move |kw| (kd, kh, kw))))
        .map(|(kd, kh, kw)| tap_offset(cfg, hp, wp, kd, kh, kw))
        .collect();
    let mut buf = vec![T::zero(); CO_BLOCK * span];
    for n in 0..n_batch {
        let mut co0 = 0;
        while co0 < co_n {
            let cb = CO_BLOCK.min(co_n - co0);
            buf.fill(T::zero());
            let mut t0 = 0;
            while t0 < span {
                let len = TILE.min(span - t0);
                for ci in 0..ci_n {
                    let xvol = &xp[(n * ci_n + ci) * in_vol..(n * ci_n + ci + 1) * in_vol];
                    for (k, &off) in offsets.iter().enumerate() {
                        let xs = &xvol[off + t0..off + t0 + len];
                        for j in 0..cb {
                            let wv = w[((co0 + j) * ci_n + ci) * kvol + k];
                            axpy(&mut buf[j * span + t0..j * span + t0 + len], wv, xs);
                        }
                    }
                }
                t0 += len;
            }
            for j in 0..cb {
                let dst = (n * co_n + co0 + j) * d_o * h_o * w_o;
                for o_d in 0..d_o {
                    for o_h in 0..h_o {
                        let src = j * span + (o_d * hp + o_h) * wp;
                        let at = dst + (o_d * h_o + o_h) * w_o;
                        out[at..at + w_o].copy_from_slice(&buf[src..src + w_o]);
                    }
                }
            }
            co0 += cb;
        }
    }
}

/// Stride-1 backward pass on the padded grid (see [`forward_unit_stride`]).
/// `grad_out` is scattered onto the grid with zeros in the discarded
/// columns, so they contribute nothing.
fn backward_unit_stride<T: Real>(
    xp: &[T],
    xd: [usize; 5],
    w: &[T],
    cfg: &ConvConfig,
    go: &[T],
    od: [usize; 5],
    gw: &mut [T],
    gxp: &mut [T],
) {
    let [n_batch, ci_n, _, hp, wp] = xd;
    let [_, co_n, d_o, h_o, w_o] = od;
    let kvol = cfg.kernel_volume();
    let in_vol = xd[2] * hp * wp;
    let out_vol = d_o * h_o * w_o;
    if out_vol == 0 || co_n == 0 {
        return;
    }
    let span = (d_o - 1) * hp * wp + (h_o - 1) * wp + w_o;
    let [kd_n, kh_n, kw_n] = cfg.kernel;
    let offsets: Vec<usize> = (0..kd_n)
        .flat_map(|kd| (0..kh_n).flat_map(move |kh| (0..kw_n).map(move |kw| (kd, kh, kw))))
        .map(|(kd, kh, kw)| tap_offset(cfg, hp, wp, kd, kh, kw))
        .collect();
    let mut grid = vec![T::zero(); span];
    for n in 0..n_batch {
        for co in 0..co_n {
            let gvol = &go[(n * co_n + co) * out_vol..(n * co_n + co + 1) * out_vol];
            for o_d in 0..d_o {
                for o_h in 0..h_o {
                    let src = (o_d * h_o + o_h) * w_o;
                    let at = (o_d * hp + o_h) * wp;
                    grid[at..at + w_o].copy_from_slice(&gvol[src..src + w_o]);
                }
            }
            for ci in 0..ci_n {
                let base = (n * ci_n + ci) * in_vol;
                let xvol = &xp[base..base + in_vol];
                let gvol_in = &mut gxp[base..base + in_vol];
                for (k, &off) in offsets.iter().enumerate() {
                    let widx = (co * ci_n + ci) * kvol + k;
                    gw[widx] += dot(&grid, &xvol[off..off + span]);
                    axpy(&mut gvol_in[off..off + span], w[widx], &grid);
                }
            }
        }
    }
}

fn forward_kernel<T: Real>(
    xp: &[T],
    xd: [usize; 5],
    w: &[T],
    cfg: &ConvConfig,
    out: &mut [T],
    od: [usize; 5],
) {
    let [n_batch, ci_n, dp, hp, wp] = xd;
    let [_, co_n, d_o, h_o, w_o] = od;
    let [kd_n, kh_n, kw_n] = cfg.kernel;
    let [sd, sh, sw] = cfg.stride;
    let [dd, dh, dw] = cfg.dilation;
    let kvol = kd_n * kh_n * kw_n;
    let in_vol = dp * hp * wp;
    let out_vol = d_o * h_o * w_o;
    let plane = h_o * w_o;
    if out_vol == 0 || co_n == 0 {
        return;
    }

    for n in 0..n_batch {
        let mut co0 = 0;
        while co0 < co_n {
            let cb = CO_BLOCK.min(co_n - co0);
            let base = (n * co_n + co0) * out_vol;
            let block = &mut out[base..base + cb * out_vol];
            for o_d in 0..d_o {
                for ci in 0..ci_n {
                    let xvol = &xp[(n * ci_n + ci) * in_vol..(n * ci_n + ci + 1) * in_vol];
                    for kd in 0..kd_n {
                        let id = o_d * sd + kd * dd;
                        for kh in 0..kh_n {
                            for kw in 0..kw_n {
                                let k = (kd * kh_n + kh) * kw_n + kw;
                                let mut wv = [T::zero(); CO_BLOCK];
                                for (j, v) in wv.iter_mut().enumerate().take(cb) {
                                    *v = w[((co0 + j) * ci_n + ci) * kvol + k];
                                }
                                for o_h in 0..h_o {
                                    let ih = o_h * sh + kh * dh;
                                    let xrow = &xvol[(id * hp + ih) * wp + kw * dw..];
                                    let row_at = o_d * plane + o_h * w_o;
                                    if sw == 1 {
                                        let xrow = &xrow[..w_o];
                                        for (j, &wj) in wv.iter().enumerate().take(cb) {
                                            let at = j * out_vol + row_at;
                                            axpy(&mut block[at..at + w_o], wj, xrow);
                                        }
                                    } else {
                                        for (j, &wj) in wv.iter().enumerate().take(cb) {
                                            let at = j * out_vol + row_at;
                                            for (ow, o) in
                                                block[at..at + w_o].iter_mut().enumerate()
                                            {
                                                *o += wj * xrow[ow * sw];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            co0 += cb;
        }
    }
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Eight-lane dot product; fixed reduction order.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            lanes[l] += ac[l] * bc[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    s + tail
}

/// Gradients of `sum(grad_out ⊙ conv(x, w, b))` with respect to `x`, `w`
/// and `b`.
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    cfg: &ConvConfig,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = check(x, w, cfg)?;
    let expect = shape_like(x.shape(), g.out);
    if grad_out.shape() != expect.as_slice() {
        return Err(Error::ShapeMismatch {
            context: "conv grad_out",
            expected: expect,
            actual: grad_out.shape().to_vec(),
        });
    }
    let xd = volume_dims(x.shape(), "conv input")?;
    let xp = pad_spatial(x.data(), xd, cfg.padding);
    let go = grad_out.data();

    let [n_batch, ci_n, dp, hp, wp] = g.xp;
    let [_, co_n, d_o, h_o, w_o] = g.out;
    let [kd_n, kh_n, kw_n] = cfg.kernel;
    let [sd, sh, sw] = cfg.stride;
    let [dd, dh, dw] = cfg.dilation;
    let kvol = kd_n * kh_n * kw_n;
    let in_vol = dp * hp * wp;
    let out_vol = d_o * h_o * w_o;
    let wd = w.data();

    let mut gb = vec![T::zero(); co_n];
    let mut gw = vec![T::zero(); wd.len()];
    let mut gxp = vec![T::zero(); xp.len()];
    let mut strided = vec![T::zero(); w_o];

    if cfg.stride == [1, 1, 1] {
        for n in 0..n_batch {
            for co in 0..co_n {
                gb[co] += go[(n * co_n + co) * out_vol..(n * co_n + co + 1) * out_vol]
                    .iter()
                    .copied()
                    .sum::<T>();
            }
        }
        backward_unit_stride(&xp, g.xp, wd, cfg, go, g.out, &mut gw, &mut gxp);
    } else {
        for n in 0..n_batch {
            for co in 0..co_n {
                let gvol = &go[(n * co_n + co) * out_vol..(n * co_n + co + 1) * out_vol];
                gb[co] += gvol.iter().copied().sum::<T>();
                for o_d in 0..d_o {
                    for ci in 0..ci_n {
                        let x_at = (n * ci_n + ci) * in_vol;
                        for kd in 0..kd_n {
                            let id = o_d * sd + kd * dd;
                            for kh in 0..kh_n {
                                for kw in 0..kw_n {
                                    let widx =
                                        (co * ci_n + ci) * kvol + (kd * kh_n + kh) * kw_n + kw;
                                    let wv = wd[widx];
                                    let mut acc = T::zero();
                                    for o_h in 0..h_o {
                                        let ih = o_h * sh + kh * dh;
                                        let grow = &gvol[(o_d * h_o + o_h) * w_o..][..w_o];
                                        let start = x_at + (id * hp + ih) * wp + kw * dw;
                                        if sw == 1 {
                                            acc += dot(grow, &xp[start..start + w_o]);
                                            axpy(&mut gxp[start..start + w_o], wv, grow);
                                        } else {
                                            for (ow, s) in strided.iter_mut().enumerate() {
                                                *s = xp[start + ow * sw];
                                            }
                                            acc += dot(grow, &strided);
                                            for (ow, &gv) in grow.iter().enumerate() {
                                                gxp[start + ow * sw] += wv * gv;
                                            }
                                        }
                                    }
                                    gw[widx] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let gx = crop_spatial(&gxp, xd, cfg.padding);
    let grads = ConvGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        weight: Tensor::new(w.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![co_n], gb)?,
    };
    debug_finite!(grads.input, x, w, grad_out);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t<T: Real>(shape: &[usize], data: &[f64]) -> Tensor<T> {
        Tensor::new(shape.to_vec(), data.iter().map(|&v| T::of(v)).collect()).unwrap()
    }

    #[test]
    fn scalar_product() {
        let x = t::<f32>(&[1, 1, 1, 1], &[2.0]);
        let w = t::<f32>(&[1, 1, 1, 1], &[3.0]);
        let y = conv(&x, &w, None, &ConvConfig::planar(1, 1, 1, 1, 0, 1)).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn identity_kernel_same_padding() {
        let x = Tensor::<f64>::from_fn([2, 1, 4, 5, 3], |i| (i as f64 * 0.37).sin());
        let mut w = Tensor::<f64>::zeros([1, 1, 3, 3, 3]);
        w.set(&[0, 0, 1, 1, 1], 1.0);
        let y = conv(&x, &w, None, &ConvConfig::cubic(1, 1, 3, 1, 1, 1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn two_by_two_ones_valid() {
        let x = t::<f32>(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let w = Tensor::<f32>::full([1, 1, 2, 2], 1.0);
        let y = conv(&x, &w, None, &ConvConfig::planar(1, 1, 2, 1, 0, 1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[12., 16., 24., 28.]);
    }

    #[test]
    fn scalar_backward() {
        let x = t::<f64>(&[1, 1, 1, 1], &[2.0]);
        let w = t::<f64>(&[1, 1, 1, 1], &[3.0]);
        let g = t::<f64>(&[1, 1, 1, 1], &[1.0]);
        let gr = conv_backward(&x, &w, &ConvConfig::planar(1, 1, 1, 1, 0, 1), &g).unwrap();
        assert_eq!(gr.weight.data(), &[2.0]);
        assert_eq!(gr.input.data(), &[3.0]);
        assert_eq!(gr.bias.data(), &[1.0]);
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let cfg = ConvConfig::cubic(2, 3, 3, 2, 1, 1);
        let x = Tensor::<f64>::from_fn([1, 2, 5, 5, 5], |i| i as f64);
        let w = Tensor::<f64>::from_fn([3, 2, 3, 3, 3], |i| 1.0 / (1.0 + i as f64));
        let y = conv(&x, &w, None, &cfg).unwrap();
        let gr = conv_backward(&x, &w, &cfg, &Tensor::zeros(y.shape().to_vec())).unwrap();
        assert!(gr.input.data().iter().all(|&v| v == 0.0));
        assert!(gr.weight.data().iter().all(|&v| v == 0.0));
        assert!(gr.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        let x = Tensor::<f32>::zeros([1, 2, 3, 3]);
        let w = Tensor::<f32>::zeros([1, 3, 3, 3]);
        assert!(matches!(
            conv(&x, &w, None, &ConvConfig::planar(3, 1, 3, 1, 0, 1)),
            Err(Error::ChannelMismatch { .. })
        ));
        let w = Tensor::<f32>::zeros([1, 2, 3, 3]);
        assert!(matches!(
            conv(&x, &w, None, &ConvConfig::planar(2, 1, 3, 1, 0, 2)),
            Err(Error::EmptyOutput { .. })
        ));
    }

    #[test]
    fn output_extent_formula() {
        assert_eq!(conv_output_extent(7, 3, 2, (1, 1), 1), Some(4));
        assert_eq!(conv_output_extent(5, 3, 1, (0, 0), 1), Some(3));
        assert_eq!(conv_output_extent(4, 3, 1, (0, 0), 2), None);
    }
}

//! ACS convolutions: a 2D kernel `C_o×C_i×K×K` is split by output channel
//! into three groups, each group is applied as a 3D convolution in one of
//! three orthogonal planar orientations, and the results are concatenated
//! along the channel axis.
//!
//! | view     | kernel      | unit axis |
//! |----------|-------------|-----------|
//! | axial    | `K×K×1`     | W         |
//! | coronal  | `K×1×K`     | H         |
//! | sagittal | `1×K×K`     | D         |
//!
//! The anatomical names are labels only; the kernel shapes are what matter.

mod variants;

pub use variants::{
    mean_acs_conv, mean_acs_conv_backward, soft_acs_conv, soft_acs_conv_backward, SoftAcsGrads,
    SoftWeights,
};

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::ops::{self, conv_output_extent, ConvConfig, ConvGrads};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum View {
    Axial,
    Coronal,
    Sagittal,
}

impl View {
    pub const ALL: [View; 3] = [View::Axial, View::Coronal, View::Sagittal];

    /// Spatial axis (0 = D, 1 = H, 2 = W) on which the view kernel has extent 1.
    pub fn unit_axis(self) -> usize {
        match self {
            View::Axial => 2,
            View::Coronal => 1,
            View::Sagittal => 0,
        }
    }

    pub fn kernel_shape(self, k: usize) -> [usize; 3] {
        let mut s = [k; 3];
        s[self.unit_axis()] = 1;
        s
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Axial => "axial",
            View::Coronal => "coronal",
            View::Sagittal => "sagittal",
        }
    }
}

/// Output channel counts per view; they sum to `C_o`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChannelSplit {
    pub axial: usize,
    pub coronal: usize,
    pub sagittal: usize,
}

impl ChannelSplit {
    pub fn total(&self) -> usize {
        self.axial + self.coronal + self.sagittal
    }

    pub fn get(&self, view: View) -> usize {
        match view {
            View::Axial => self.axial,
            View::Coronal => self.coronal,
            View::Sagittal => self.sagittal,
        }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.axial, self.coronal, self.sagittal]
    }

    /// Row range of the 2D kernel assigned to `view`.
    pub fn rows(&self, view: View) -> Range<usize> {
        match view {
            View::Axial => 0..self.axial,
            View::Coronal => self.axial..self.axial + self.coronal,
            View::Sagittal => self.axial + self.coronal..self.total(),
        }
    }
}

/// `⌊C_o/3⌋` channels per view, the remainder handed out one each to axial,
/// then coronal.
pub fn split_channels(out_channels: usize) -> ChannelSplit {
    let base = out_channels / 3;
    let r = out_channels % 3;
    ChannelSplit {
        axial: base + usize::from(r >= 1),
        coronal: base + usize::from(r >= 2),
        sagittal: base,
    }
}

/// The shared 2D kernel plus its channel split. Stores exactly
/// `C_o·C_i·K²` kernel elements (and `C_o` bias elements when present).
#[derive(Clone, Debug, PartialEq)]
pub struct AcsKernel<T> {
    weight: Tensor<T>,
    split: ChannelSplit,
    bias: Option<Tensor<T>>,
}

impl<T: Real> AcsKernel<T> {
    pub fn new(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        let co = weight.shape().first().copied().unwrap_or(0);
        Self::with_split(weight, split_channels(co), bias)
    }

    pub fn with_split(
        weight: Tensor<T>,
        split: ChannelSplit,
        bias: Option<Tensor<T>>,
    ) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || s[2] != s[3] || s[2] == 0 {
            return Err(Error::ShapeMismatch {
                context: "ACS kernel (C_o, C_i, K, K)",
                expected: vec![s.first().copied().unwrap_or(0), 0, 0, 0],
                actual: s.to_vec(),
            });
        }
        if split.total() != s[0] {
            return Err(Error::InvalidConfig(alloc::format!(
                "channel split {:?} does not sum to {}",
                split.as_array(),
                s[0]
            )));
        }
        if let Some(b) = &bias {
            if b.shape() != [s[0]] {
                return Err(Error::ShapeMismatch {
                    context: "ACS bias",
                    expected: vec![s[0]],
                    actual: b.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            weight,
            split,
            bias,
        })
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor<T>> {
        self.bias.as_ref()
    }

    pub fn split(&self) -> ChannelSplit {
        self.split
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }
}

/// Rows of `w2d` reshaped into a 3D kernel with a unit extent on the view's
/// axis. Inserting a unit axis does not change the row-major layout, so the
/// data is a straight copy of the selected rows.
pub(crate) fn view_kernel<T: Real>(
    w2d: &Tensor<T>,
    rows: Range<usize>,
    view: View,
) -> Result<Tensor<T>> {
    let [_, ci, k, _] = *w2d.shape() else {
        return Err(Error::RankMismatch {
            expected: 4,
            actual: w2d.rank(),
        });
    };
    let per_row = ci * k * k;
    let data = w2d.data()[rows.start * per_row..rows.end * per_row].to_vec();
    let ks = view.kernel_shape(k);
    Tensor::new([rows.len(), ci, ks[0], ks[1], ks[2]], data)
}

/// `[W_a, W_c, W_s]` with shapes `(C_a,C_i,K,K,1)`, `(C_c,C_i,K,1,K)`,
/// `(C_s,C_i,1,K,K)`.
pub fn make_view_kernels<T: Real>(k: &AcsKernel<T>) -> Result<[Tensor<T>; 3]> {
    let split = k.split();
    Ok([
        view_kernel(&k.weight, split.rows(View::Axial), View::Axial)?,
        view_kernel(&k.weight, split.rows(View::Coronal), View::Coronal)?,
        view_kernel(&k.weight, split.rows(View::Sagittal), View::Sagittal)?,
    ])
}

/// Padding for one view convolution so that its output matches the
/// `K×K×K` reference convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewPadding {
    pub padding: [(usize, usize); 3],
    /// Reference output extents.
    pub output: [usize; 3],
    pub unit_axis: usize,
    /// Output extent on the unit axis before trimming (≥ `output[unit_axis]`).
    pub natural: usize,
    /// Output positions removed from the front and back of the unit axis.
    pub trim: (usize, usize),
}

impl ViewPadding {
    pub fn trimmed(&self) -> bool {
        self.natural != self.output[self.unit_axis]
    }
}

fn check_cubic(cfg: &ConvConfig) -> Result<usize> {
    let k = cfg.kernel[0];
    if cfg.kernel != [k; 3] {
        return Err(Error::InvalidConfig(alloc::format!(
            "ACS needs a cubic reference kernel, got {:?}",
            cfg.kernel
        )));
    }
    cfg.validate()?;
    Ok(k)
}

/// On the two `K`-extent axes the reference padding is used unchanged. On
/// the unit axis the total padding is `T = (O−1)·s + 1 − I`, split as
/// `(⌊T/2⌋, T−⌊T/2⌋)`; when `T < 0` nothing is padded and the natural
/// output is trimmed to `O`, `⌊excess/2⌋` from the front and the rest from
/// the back, so the unit axis stays aligned with the kernel's centre slice.
pub fn view_padding(input: [usize; 3], cfg: &ConvConfig, view: View) -> Result<ViewPadding> {
    let k = check_cubic(cfg)?;
    let output = cfg.output_extents(input)?;
    let u = view.unit_axis();
    let mut padding = cfg.padding;
    let (i, o, s) = (
        input[u] as isize,
        output[u] as isize,
        cfg.stride[u] as isize,
    );
    let t = (o - 1) * s + 1 - i;
    let natural = if t >= 0 {
        let t = t as usize;
        padding[u] = (t / 2, t - t / 2);
        output[u]
    } else {
        padding[u] = (0, 0);
        conv_output_extent(input[u], 1, cfg.stride[u], (0, 0), 1).ok_or(Error::EmptyOutput {
            axis: u,
            input: input[u],
            kernel: k,
        })?
    };
    let excess = natural - output[u];
    Ok(ViewPadding {
        padding,
        output,
        unit_axis: u,
        natural,
        trim: (excess / 2, excess - excess / 2),
    })
}

pub(crate) fn input_extents<T: Real>(x: &Tensor<T>, cfg: &ConvConfig) -> Result<[usize; 3]> {
    let s = x.shape();
    if s.len() != 5 {
        return Err(Error::RankMismatch {
            expected: 5,
            actual: s.len(),
        });
    }
    if s[1] != cfg.in_channels {
        return Err(Error::ChannelMismatch {
            context: "ACS input",
            expected: cfg.in_channels,
            actual: s[1],
        });
    }
    Ok([s[2], s[3], s[4]])
}

fn view_config(cfg: &ConvConfig, view: View, vp: &ViewPadding, channels: usize) -> ConvConfig {
    ConvConfig {
        kernel: view.kernel_shape(cfg.kernel[0]),
        stride: cfg.stride,
        padding: vp.padding,
        dilation: cfg.dilation,
        in_channels: cfg.in_channels,
        out_channels: channels,
    }
}

fn trim_pads(vp: &ViewPadding) -> [(usize, usize); 5] {
    let mut pads = [(0, 0); 5];
    pads[2 + vp.unit_axis] = vp.trim;
    pads
}

/// One view convolution (no bias) with view padding and trimming.
pub(crate) fn view_forward<T: Real>(
    x: &Tensor<T>,
    w_view: &Tensor<T>,
    view: View,
    cfg: &ConvConfig,
) -> Result<Tensor<T>> {
    let input = input_extents(x, cfg)?;
    let vp = view_padding(input, cfg, view)?;
    let c = w_view.shape()[0];
    let n = x.shape()[0];
    if c == 0 {
        let o = vp.output;
        return Ok(Tensor::zeros([n, 0, o[0], o[1], o[2]]));
    }
    let y = ops::conv(x, w_view, None, &view_config(cfg, view, &vp, c))?;
    if vp.trimmed() {
        ops::crop(&y, &trim_pads(&vp))
    } else {
        Ok(y)
    }
}

pub(crate) fn view_backward<T: Real>(
    x: &Tensor<T>,
    w_view: &Tensor<T>,
    view: View,
    cfg: &ConvConfig,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let input = input_extents(x, cfg)?;
    let vp = view_padding(input, cfg, view)?;
    let c = w_view.shape()[0];
    if c == 0 {
        return Ok(ConvGrads {
            input: Tensor::zeros(x.shape().to_vec()),
            weight: Tensor::zeros(w_view.shape().to_vec()),
            bias: Tensor::zeros([0]),
        });
    }
    let g = if vp.trimmed() {
        ops::pad(grad_out, &trim_pads(&vp), T::zero())?
    } else {
        grad_out.clone()
    };
    ops::conv_backward(x, w_view, &view_config(cfg, view, &vp, c), &g)
}

fn check_kernel<T: Real>(w2d: &Tensor<T>, cfg: &ConvConfig) -> Result<()> {
    let k = check_cubic(cfg)?;
    let expect = [cfg.out_channels, cfg.in_channels, k, k];
    if w2d.shape() != expect {
        return Err(Error::ShapeMismatch {
            context: "ACS kernel",
            expected: expect.to_vec(),
            actual: w2d.shape().to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn add_bias<T: Real>(y: &mut Tensor<T>, bias: &Tensor<T>) {
    let c = y.shape()[1];
    let s: usize = y.shape()[2..].iter().product();
    if s == 0 {
        return;
    }
    for (i, chunk) in y.data_mut().chunks_mut(s).enumerate() {
        let b = bias.data()[i % c];
        for v in chunk {
            *v += b;
        }
    }
}

/// ACS convolution. Output shape equals the `K×K×K` reference convolution
/// described by `cfg`; the bias is added after concatenation.
pub fn acs_conv<T: Real>(x: &Tensor<T>, k: &AcsKernel<T>, cfg: &ConvConfig) -> Result<Tensor<T>> {
    check_kernel(k.weight(), cfg)?;
    let kernels = make_view_kernels(k)?;
    let mut parts = Vec::with_capacity(3);
    for (view, w) in View::ALL.into_iter().zip(&kernels) {
        parts.push(view_forward(x, w, view, cfg)?);
    }
    let mut y = ops::concat_channels(&[&parts[0], &parts[1], &parts[2]])?;
    if let Some(b) = k.bias() {
        add_bias(&mut y, b);
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcsGrads<T> {
    pub input: Tensor<T>,
    /// Gradient of the shared 2D kernel, `(C_o, C_i, K, K)`.
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    /// Per-view kernel gradients before reassembly.
    pub views: [Tensor<T>; 3],
}

pub fn acs_conv_backward<T: Real>(
    x: &Tensor<T>,
    k: &AcsKernel<T>,
    cfg: &ConvConfig,
    grad_out: &Tensor<T>,
) -> Result<AcsGrads<T>> {
    check_kernel(k.weight(), cfg)?;
    let kernels = make_view_kernels(k)?;
    let parts = ops::split_channels_of(grad_out, &k.split().as_array())?;
    let mut input = Tensor::zeros(x.shape().to_vec());
    let mut views = Vec::with_capacity(3);
    for ((view, w), g) in View::ALL.into_iter().zip(&kernels).zip(&parts) {
        let gr = view_backward(x, w, view, cfg, g)?;
        input.add_assign(&gr.input)?;
        views.push(gr.weight);
    }
    let views: [Tensor<T>; 3] = views
        .try_into()
        .map_err(|_| Error::InvalidConfig("views".into()))?;
    let weight = assemble_views(&views, k.weight().shape())?;
    let bias = k.bias().map(|_| channel_sums(grad_out));
    Ok(AcsGrads {
        input,
        weight,
        bias,
        views,
    })
}

/// Inverse of the split/reshape: stacks per-view kernel gradients back into
/// the `(C_o, C_i, K, K)` layout.
pub fn assemble_views<T: Real>(views: &[Tensor<T>; 3], shape: &[usize]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(shape.iter().product());
    for v in views {
        data.extend_from_slice(v.data());
    }
    Tensor::new(shape.to_vec(), data)
}

pub(crate) fn channel_sums<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let c = g.shape()[1];
    let s: usize = g.shape()[2..].iter().product();
    let mut out = vec![T::zero(); c];
    if s > 0 {
        for (i, chunk) in g.data().chunks(s).enumerate() {
            out[i % c] += chunk.iter().copied().sum::<T>();
        }
    }
    Tensor::new([c], out).expect("channel count")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rule() {
        assert_eq!(split_channels(6).as_array(), [2, 2, 2]);
        assert_eq!(split_channels(7).as_array(), [3, 2, 2]);
        assert_eq!(split_channels(8).as_array(), [3, 3, 2]);
        assert_eq!(split_channels(1).as_array(), [1, 0, 0]);
        for co in 1..50 {
            let s = split_channels(co);
            assert_eq!(s.total(), co);
            assert!(s.as_array().iter().all(|&p| p >= co / 3 && p <= co / 3 + 1));
        }
    }

    #[test]
    fn view_kernel_rows_for_seven() {
        let w = Tensor::<f64>::from_fn([7, 2, 3, 3], |i| i as f64);
        let k = AcsKernel::new(w.clone(), None).unwrap();
        let [a, c, s] = make_view_kernels(&k).unwrap();
        assert_eq!(a.shape(), &[3, 2, 3, 3, 1]);
        assert_eq!(c.shape(), &[2, 2, 3, 1, 3]);
        assert_eq!(s.shape(), &[2, 2, 1, 3, 3]);
        for i in 0..3 {
            for j in 0..2 {
                for u in 0..3 {
                    for v in 0..3 {
                        assert_eq!(a.get(&[i, j, u, v, 0]), w.get(&[i, j, u, v]));
                        if i < 2 {
                            assert_eq!(c.get(&[i, j, u, 0, v]), w.get(&[i + 3, j, u, v]));
                            assert_eq!(s.get(&[i, j, 0, u, v]), w.get(&[i + 5, j, u, v]));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unit_kernel_views() {
        let w = Tensor::<f64>::from_fn([3, 1, 1, 1], |i| i as f64);
        let k = AcsKernel::new(w, None).unwrap();
        for (v, t) in make_view_kernels(&k).unwrap().iter().enumerate() {
            assert_eq!(t.shape(), &[1, 1, 1, 1, 1]);
            assert_eq!(t.data(), &[v as f64]);
        }
    }

    #[test]
    fn view_padding_examples() {
        let vp =
            view_padding([8; 3], &ConvConfig::cubic(1, 1, 3, 1, 1, 1), View::Sagittal).unwrap();
        assert_eq!(vp.output, [8; 3]);
        assert_eq!(vp.padding, [(0, 0), (1, 1), (1, 1)]);
        assert!(!vp.trimmed());

        let vp = view_padding([7; 3], &ConvConfig::cubic(1, 1, 3, 2, 1, 1), View::Axial).unwrap();
        assert_eq!(vp.output, [4; 3]);
        assert_eq!(vp.padding[2], (0, 0));

        let vp = view_padding([5; 3], &ConvConfig::cubic(1, 1, 3, 1, 0, 1), View::Coronal).unwrap();
        assert_eq!(vp.output, [3; 3]);
        assert_eq!(vp.padding[1], (0, 0));
        assert_eq!(vp.natural, 5);
        assert_eq!(vp.trim, (1, 1));
        assert!(vp.trimmed());
    }

    #[test]
    fn view_padding_positive_total_is_split() {
        // K=1, p=2: O = I + 4, T = 4
        let vp = view_padding([5; 3], &ConvConfig::cubic(1, 1, 1, 1, 2, 1), View::Axial).unwrap();
        assert_eq!(vp.output, [9; 3]);
        assert_eq!(vp.padding[2], (2, 2));
        // K=3, s=1, p=2: T = 2 → (1, 1)
        let vp = view_padding([5; 3], &ConvConfig::cubic(1, 1, 3, 1, 2, 1), View::Axial).unwrap();
        assert_eq!(vp.padding[2], (1, 1));
        // odd total goes to the end
        let mut cfg = ConvConfig::cubic(1, 1, 3, 1, 1, 1);
        cfg.padding[0] = (1, 2);
        let vp = view_padding([5; 3], &cfg, View::Sagittal).unwrap();
        assert_eq!(vp.padding[0], (0, 1));
    }

    #[test]
    fn view_padding_rejects_empty_output() {
        assert!(matches!(
            view_padding([2; 3], &ConvConfig::cubic(1, 1, 3, 1, 0, 1), View::Axial),
            Err(Error::EmptyOutput { .. })
        ));
    }

    #[test]
    fn shape_matches_reference() {
        let x = Tensor::<f64>::from_fn([1, 2, 5, 6, 7], |i| (i as f64).cos());
        for (k, s, p, d) in [
            (3, 1, 1, 1),
            (3, 2, 0, 1),
            (3, 2, 1, 2),
            (1, 1, 0, 1),
            (5, 3, 2, 1),
        ] {
            let cfg = ConvConfig::cubic(2, 4, k, s, p, d);
            let w = Tensor::from_fn([4, 2, k, k], |i| i as f64 * 0.01);
            let y = acs_conv(&x, &AcsKernel::new(w, None).unwrap(), &cfg).unwrap();
            let o = cfg.output_extents([5, 6, 7]).unwrap();
            assert_eq!(y.shape(), &[1, 4, o[0], o[1], o[2]], "{k} {s} {p} {d}");
        }
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4, 4]);
        let k = AcsKernel::new(Tensor::zeros([3, 3, 3, 3]), None).unwrap();
        assert!(acs_conv(&x, &k, &ConvConfig::cubic(3, 3, 3, 1, 1, 1)).is_err());
    }
}

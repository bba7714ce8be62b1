//! Mean-ACS and Soft-ACS: the full 2D kernel is applied in all three view
//! orientations and the three results are averaged (Mean) or combined with
//! softmax weights over three learnable logits (Soft).

use alloc::vec::Vec;

use super::{add_bias, channel_sums, check_kernel, view_backward, view_forward, View};
use crate::error::Result;
use crate::ops::ConvConfig;
use crate::real::Real;
use crate::tensor::Tensor;

/// Three logits; the view weights are their softmax.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftWeights<T> {
    pub logits: [T; 3],
}

impl<T: Real> Default for SoftWeights<T> {
    fn default() -> Self {
        Self {
            logits: [T::zero(); 3],
        }
    }
}

impl<T: Real> SoftWeights<T> {
    pub fn new(logits: [T; 3]) -> Self {
        Self { logits }
    }

    /// Unnormalized weights `exp(l − max l)`.
    fn raw(&self) -> [T; 3] {
        let m = self.logits[0].max(self.logits[1]).max(self.logits[2]);
        self.logits.map(|l| (l - m).exp())
    }

    /// `(α_a, α_c, α_s)`, positive and summing to one.
    pub fn weights(&self) -> [T; 3] {
        let r = self.raw();
        let total = r[0] + r[1] + r[2];
        r.map(|v| v / total)
    }
}

fn full_views<T: Real>(x: &Tensor<T>, w2d: &Tensor<T>, cfg: &ConvConfig) -> Result<Vec<Tensor<T>>> {
    check_kernel(w2d, cfg)?;
    let co = w2d.shape()[0];
    View::ALL
        .into_iter()
        .map(|v| view_forward(x, &super::view_kernel(w2d, 0..co, v)?, v, cfg))
        .collect()
}

/// `(r_a·Y_a + r_c·Y_c + r_s·Y_s) / (r_a + r_c + r_s)`.
///
/// With equal weights this is exactly `(Y_a + Y_c + Y_s) / 3`.
fn combine<T: Real>(ys: &[Tensor<T>], raw: [T; 3]) -> Tensor<T> {
    let total = raw[0] + raw[1] + raw[2];
    let data = ys[0]
        .data()
        .iter()
        .zip(ys[1].data())
        .zip(ys[2].data())
        .map(|((&a, &c), &s)| (raw[0] * a + raw[1] * c + raw[2] * s) / total)
        .collect();
    Tensor::new(ys[0].shape().to_vec(), data).expect("view outputs share a shape")
}

pub fn mean_acs_conv<T: Real>(
    x: &Tensor<T>,
    w2d: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    cfg: &ConvConfig,
) -> Result<Tensor<T>> {
    let ys = full_views(x, w2d, cfg)?;
    let mut y = combine(&ys, [T::one(); 3]);
    if let Some(b) = bias {
        add_bias(&mut y, b);
    }
    Ok(y)
}

pub fn soft_acs_conv<T: Real>(
    x: &Tensor<T>,
    w2d: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    soft: &SoftWeights<T>,
    cfg: &ConvConfig,
) -> Result<Tensor<T>> {
    let ys = full_views(x, w2d, cfg)?;
    let mut y = combine(&ys, soft.raw());
    if let Some(b) = bias {
        add_bias(&mut y, b);
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftAcsGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub logits: [T; 3],
}

fn weighted_backward<T: Real>(
    x: &Tensor<T>,
    w2d: &Tensor<T>,
    cfg: &ConvConfig,
    alphas: [T; 3],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_kernel(w2d, cfg)?;
    let co = w2d.shape()[0];
    let mut gx = Tensor::zeros(x.shape().to_vec());
    let mut gw = Tensor::zeros(w2d.shape().to_vec());
    for (view, &alpha) in View::ALL.into_iter().zip(&alphas) {
        let g = grad_out.scale(alpha);
        let gr = view_backward(x, &super::view_kernel(w2d, 0..co, view)?, view, cfg, &g)?;
        gx.add_assign(&gr.input)?;
        for (acc, &v) in gw.data_mut().iter_mut().zip(gr.weight.data()) {
            *acc += v;
        }
    }
    Ok((gx, gw))
}

pub fn mean_acs_conv_backward<T: Real>(
    x: &Tensor<T>,
    w2d: &Tensor<T>,
    cfg: &ConvConfig,
    grad_out: &Tensor<T>,
) -> Result<SoftAcsGrads<T>> {
    let third = T::one() / T::of(3.0);
    let (input, weight) = weighted_backward(x, w2d, cfg, [third; 3], grad_out)?;
    Ok(SoftAcsGrads {
        input,
        weight,
        bias: channel_sums(grad_out),
        logits: [T::zero(); 3],
    })
}

/// Also returns the logit gradients: `∂L/∂l_v = Σ g·α_v·(Y_v − Y)`.
pub fn soft_acs_conv_backward<T: Real>(
    x: &Tensor<T>,
    w2d: &Tensor<T>,
    soft: &SoftWeights<T>,
    cfg: &ConvConfig,
    grad_out: &Tensor<T>,
) -> Result<SoftAcsGrads<T>> {
    let alphas = soft.weights();
    let ys = full_views(x, w2d, cfg)?;
    let y = combine(&ys, soft.raw());
    let g = grad_out.data();
    let mut logits = [T::zero(); 3];
    for (v, yv) in ys.iter().enumerate() {
        let mut acc = T::zero();
        for ((&gi, &a), &b) in g.iter().zip(yv.data()).zip(y.data()) {
            acc += gi * (a - b);
        }
        logits[v] = alphas[v] * acc;
    }
    let (input, weight) = weighted_backward(x, w2d, cfg, alphas, grad_out)?;
    Ok(SoftAcsGrads {
        input,
        weight,
        bias: channel_sums(grad_out),
        logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_weights() {
        let w = SoftWeights::<f64>::default().weights();
        assert_eq!(w, [1.0 / 3.0; 3]);
        let w = SoftWeights::new([20.0, 0.0, 0.0]).weights();
        assert!(w[0] > 1.0 - 1e-8 && w.iter().all(|&v| v > 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_logits_equal_mean_bitwise() {
        let x = Tensor::<f32>::from_fn([1, 2, 4, 5, 6], |i| ((i * 37) % 11) as f32 * 0.13 - 0.6);
        let w = Tensor::<f32>::from_fn([3, 2, 3, 3], |i| ((i * 17) % 7) as f32 * 0.1 - 0.3);
        let cfg = ConvConfig::cubic(2, 3, 3, 1, 1, 1);
        let m = mean_acs_conv(&x, &w, None, &cfg).unwrap();
        let s = soft_acs_conv(&x, &w, None, &SoftWeights::default(), &cfg).unwrap();
        assert!(m.bit_eq(&s));
    }
}

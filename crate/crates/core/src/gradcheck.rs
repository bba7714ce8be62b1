//! Central finite-difference checks of the analytic backward passes.
//!
//! Each check builds a seeded f64 instance, forms the scalar
//! `L = Σ r ⊙ f(inputs)` with a fixed random `r`, and compares every
//! analytic gradient entry with `(L(x+h) − L(x−h)) / 2h`, where
//! `h = 1e-5·max(1, |x|)`.
//!
//! The relative error of an entry is `|a − n| / max(|a|, |n|, τ)` with
//! `τ = 1e-3·max|n|` over the checked tensor, so entries that are tiny
//! compared with the rest of the gradient are judged against its scale.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acs::{
    acs_conv, acs_conv_backward, mean_acs_conv, mean_acs_conv_backward, soft_acs_conv,
    soft_acs_conv_backward, AcsKernel, SoftWeights,
};
use crate::engine::{loss_from_logits, LossKind};
use crate::error::Result;
use crate::ops::{self, ConvConfig, NormMode, PoolConfig, PoolMode};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GradOp {
    Conv,
    Acs,
    MeanAcs,
    SoftAcs,
    BatchNorm,
    GroupNorm,
    AvgPool,
    Dice,
    Bce,
}

impl GradOp {
    pub const ALL: [GradOp; 9] = [
        GradOp::Conv,
        GradOp::Acs,
        GradOp::MeanAcs,
        GradOp::SoftAcs,
        GradOp::BatchNorm,
        GradOp::GroupNorm,
        GradOp::AvgPool,
        GradOp::Dice,
        GradOp::Bce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradOp::Conv => "conv",
            GradOp::Acs => "acs",
            GradOp::MeanAcs => "mean_acs",
            GradOp::SoftAcs => "soft_acs",
            GradOp::BatchNorm => "batchnorm",
            GradOp::GroupNorm => "groupnorm",
            GradOp::AvgPool => "avgpool",
            GradOp::Dice => "dice",
            GradOp::Bce => "bce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

/// Largest relative error for one named input.
#[derive(Clone, Debug, PartialEq)]
pub struct InputReport {
    pub input: String,
    pub entries: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub op: GradOp,
    pub inputs: Vec<InputReport>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.inputs
            .iter()
            .map(|r| r.max_rel_err)
            .fold(0.0, f64::max)
    }
}

/// Step used for entry value `x`.
pub fn step_for(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Compares `analytic` with central differences of `loss` around `x`.
pub fn check_entries(x: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut xs = x.to_vec();
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            let h = step_for(x[i]);
            xs[i] = x[i] + h;
            let up = loss(&xs);
            xs[i] = x[i] - h;
            let down = loss(&xs);
            xs[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tau = (1e-3 * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(tau))
        .fold(0.0, f64::max)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::new(t.shape().to_vec(), data.to_vec()).expect("same length")
}

struct Checker {
    inputs: Vec<InputReport>,
}

impl Checker {
    fn input(
        &mut self,
        name: &str,
        x: &Tensor<f64>,
        analytic: &Tensor<f64>,
        loss: impl FnMut(&Tensor<f64>) -> f64,
    ) {
        let mut loss = loss;
        let err = check_entries(x.data(), analytic.data(), |d| loss(&with(x, d)));
        self.inputs.push(InputReport {
            input: name.into(),
            entries: x.len(),
            max_rel_err: err,
        });
    }
}

/// Runs the finite-difference check for `op` on a seeded instance.
pub fn run(op: GradOp, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Checker { inputs: Vec::new() };
    match op {
        GradOp::Conv => {
            let cfg = ConvConfig {
                kernel: [2, 3, 2],
                stride: [1, 2, 1],
                padding: [(1, 0), (1, 1), (0, 1)],
                dilation: [1, 1, 2],
                in_channels: 2,
                out_channels: 3,
            };
            let x = random(&mut rng, &[2, 2, 3, 5, 4]);
            let w = random(&mut rng, &[3, 2, 2, 3, 2]);
            let b = random(&mut rng, &[3]);
            let y = ops::conv(&x, &w, Some(&b), &cfg)?;
            let r = random(&mut rng, y.shape());
            let g = ops::conv_backward(&x, &w, &cfg, &r)?;
            let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
                dot(&r, &ops::conv(x, w, Some(b), &cfg).expect("valid"))
            };
            c.input("input", &x, &g.input, |t| f(t, &w, &b));
            c.input("weight", &w, &g.weight, |t| f(&x, t, &b));
            c.input("bias", &b, &g.bias, |t| f(&x, &w, t));
        }
        GradOp::Acs => {
            let cfg = ConvConfig::cubic(3, 5, 3, 2, 1, 1);
            let x = random(&mut rng, &[2, 3, 5, 4, 6]);
            let w = random(&mut rng, &[5, 3, 3, 3]);
            let b = random(&mut rng, &[5]);
            let k = AcsKernel::new(w.clone(), Some(b.clone()))?;
            let y = acs_conv(&x, &k, &cfg)?;
            let r = random(&mut rng, y.shape());
            let g = acs_conv_backward(&x, &k, &cfg, &r)?;
            let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
                let k = AcsKernel::new(w.clone(), Some(b.clone())).expect("valid");
                dot(&r, &acs_conv(x, &k, &cfg).expect("valid"))
            };
            c.input("input", &x, &g.input, |t| f(t, &w, &b));
            c.input("weight", &w, &g.weight, |t| f(&x, t, &b));
            c.input("bias", &b, g.bias.as_ref().expect("biased"), |t| {
                f(&x, &w, t)
            });
        }
        GradOp::MeanAcs => {
            let cfg = ConvConfig::cubic(2, 4, 3, 1, 1, 1);
            let x = random(&mut rng, &[1, 2, 4, 5, 3]);
            let w = random(&mut rng, &[4, 2, 3, 3]);
            let b = random(&mut rng, &[4]);
            let y = mean_acs_conv(&x, &w, Some(&b), &cfg)?;
            let r = random(&mut rng, y.shape());
            let g = mean_acs_conv_backward(&x, &w, &cfg, &r)?;
            let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
                dot(&r, &mean_acs_conv(x, w, Some(b), &cfg).expect("valid"))
            };
            c.input("input", &x, &g.input, |t| f(t, &w, &b));
            c.input("weight", &w, &g.weight, |t| f(&x, t, &b));
            c.input("bias", &b, &g.bias, |t| f(&x, &w, t));
        }
        GradOp::SoftAcs => {
            let cfg = ConvConfig::cubic(2, 4, 3, 1, 1, 1);
            let x = random(&mut rng, &[1, 2, 4, 5, 3]);
            let w = random(&mut rng, &[4, 2, 3, 3]);
            let b = random(&mut rng, &[4]);
            let l = random(&mut rng, &[3]);
            let soft = |l: &Tensor<f64>| SoftWeights::new([l.data()[0], l.data()[1], l.data()[2]]);
            let y = soft_acs_conv(&x, &w, Some(&b), &soft(&l), &cfg)?;
            let r = random(&mut rng, y.shape());
            let g = soft_acs_conv_backward(&x, &w, &soft(&l), &cfg, &r)?;
            let gl = Tensor::new([3], g.logits.to_vec())?;
            let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, l: &Tensor<f64>| {
                dot(
                    &r,
                    &soft_acs_conv(x, w, Some(b), &soft(l), &cfg).expect("valid"),
                )
            };
            c.input("input", &x, &g.input, |t| f(t, &w, &b, &l));
            c.input("weight", &w, &g.weight, |t| f(&x, t, &b, &l));
            c.input("bias", &b, &g.bias, |t| f(&x, &w, t, &l));
            c.input("logits", &l, &gl, |t| f(&x, &w, &b, t));
        }
        GradOp::BatchNorm => {
            let x = random(&mut rng, &[2, 3, 2, 2, 2]);
            let gamma = random(&mut rng, &[3]);
            let beta = random(&mut rng, &[3]);
            let (rm, rv) = (Tensor::zeros([3]), Tensor::full([3], 1.0));
            let bn = |x: &Tensor<f64>, gm: &Tensor<f64>, bt: &Tensor<f64>| {
                ops::batchnorm(x, gm, bt, &rm, &rv, 1e-5, 0.1, NormMode::Train).expect("valid")
            };
            let out = bn(&x, &gamma, &beta);
            let r = random(&mut rng, out.output.shape());
            let g = ops::batchnorm_backward(&x, &gamma, &out.cache, &r)?;
            c.input("input", &x, &g.input, |t| {
                dot(&r, &bn(t, &gamma, &beta).output)
            });
            c.input("gamma", &gamma, &g.gamma, |t| {
                dot(&r, &bn(&x, t, &beta).output)
            });
            c.input("beta", &beta, &g.beta, |t| {
                dot(&r, &bn(&x, &gamma, t).output)
            });
        }
        GradOp::GroupNorm => {
            let x = random(&mut rng, &[2, 4, 2, 3, 2]);
            let gamma = random(&mut rng, &[4]);
            let beta = random(&mut rng, &[4]);
            let gn = |x: &Tensor<f64>, gm: &Tensor<f64>, bt: &Tensor<f64>| {
                ops::groupnorm(x, gm, bt, 2, 1e-5).expect("valid")
            };
            let (y, cache) = gn(&x, &gamma, &beta);
            let r = random(&mut rng, y.shape());
            let g = ops::groupnorm_backward(&x, &gamma, 2, &cache, &r)?;
            c.input("input", &x, &g.input, |t| dot(&r, &gn(t, &gamma, &beta).0));
            c.input("gamma", &gamma, &g.gamma, |t| dot(&r, &gn(&x, t, &beta).0));
            c.input("beta", &beta, &g.beta, |t| dot(&r, &gn(&x, &gamma, t).0));
        }
        GradOp::AvgPool => {
            let cfg = PoolConfig::new([2, 3, 2], [1, 2, 2], [1, 1, 0]);
            let x = random(&mut rng, &[1, 2, 3, 5, 4]);
            let (y, cache) = ops::pool3d(&x, PoolMode::Avg, &cfg)?;
            let r = random(&mut rng, y.shape());
            let g = ops::pool3d_backward(&x, PoolMode::Avg, &cfg, &cache, &r)?;
            c.input("input", &x, &g, |t| {
                dot(&r, &ops::pool3d(t, PoolMode::Avg, &cfg).expect("valid").0)
            });
        }
        GradOp::Dice | GradOp::Bce => {
            let kind = if op == GradOp::Dice {
                LossKind::Dice
            } else {
                LossKind::Bce
            };
            let z = random(&mut rng, &[1, 1, 4, 4, 4]);
            let t = Tensor::from_fn([1, 1, 4, 4, 4], |_| {
                f64::from(u8::from(rng.random_bool(0.4)))
            });
            let (_, g) = loss_from_logits(kind, &z, &t)?;
            c.input("logits", &z, &g, |zz| {
                loss_from_logits(kind, zz, &t).expect("valid").0
            });
        }
    }
    Ok(GradReport {
        op,
        inputs: c.inputs,
    })
}

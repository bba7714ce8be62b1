use alloc::vec;
use alloc::vec::Vec;

use super::debug_finite;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; nothing is updated.
    Eval,
}

/// Per-channel statistics used by the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormCache<T> {
    pub mode: NormMode,
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormOutput<T> {
    pub output: Tensor<T>,
    pub cache: BatchNormCache<T>,
    /// Updated `(running_mean, running_var)` in train mode.
    pub running: Option<(Tensor<T>, Tensor<T>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn channel_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            actual: shape.len(),
        });
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

fn check_param<T: Real>(t: &Tensor<T>, c: usize, context: &'static str) -> Result<()> {
    if t.shape() != [c] {
        return Err(Error::ChannelMismatch {
            context,
            expected: c,
            actual: t.shape().first().copied().unwrap_or(0),
        });
    }
    Ok(())
}

/// Batch normalization over every axis except the channel axis (axis 1).
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate:
/// `running = (1 − momentum)·running + momentum·batch`.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: T,
    momentum: T,
    mode: NormMode,
) -> Result<BatchNormOutput<T>> {
    let (n, c, s) = channel_layout(x.shape())?;
    check_param(gamma, c, "batchnorm gamma")?;
    check_param(beta, c, "batchnorm beta")?;
    check_param(running_mean, c, "batchnorm running_mean")?;
    check_param(running_var, c, "batchnorm running_var")?;
    let xs = x.data();
    let count = n * s;

    let (mean, var) = match mode {
        NormMode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
        NormMode::Train => {
            if count == 0 {
                return Err(Error::InvalidConfig("batchnorm over an empty batch".into()));
            }
            let m = T::count(count);
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut acc = T::zero();
                for b in 0..n {
                    acc += xs[(b * c + ch) * s..][..s].iter().copied().sum::<T>();
                }
                let mu = acc / m;
                let mut sq = T::zero();
                for b in 0..n {
                    for &v in &xs[(b * c + ch) * s..][..s] {
                        sq += (v - mu) * (v - mu);
                    }
                }
                mean[ch] = mu;
                var[ch] = sq / m;
            }
            (mean, var)
        }
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let (g, bt) = (gamma.data(), beta.data());
    let mut out = vec![T::zero(); xs.len()];
    for b in 0..n {
        for ch in 0..c {
            let at = (b * c + ch) * s;
            for (o, &v) in out[at..at + s].iter_mut().zip(&xs[at..at + s]) {
                *o = g[ch] * ((v - mean[ch]) * inv_std[ch]) + bt[ch];
            }
        }
    }

    let running = match mode {
        NormMode::Eval => None,
        NormMode::Train => {
            let keep = T::one() - momentum;
            let unbias = if count > 1 {
                T::count(count) / T::count(count - 1)
            } else {
                T::one()
            };
            let rm = running_mean
                .data()
                .iter()
                .zip(&mean)
                .map(|(&r, &m)| keep * r + momentum * m)
                .collect();
            let rv = running_var
                .data()
                .iter()
                .zip(&var)
                .map(|(&r, &v)| keep * r + momentum * v * unbias)
                .collect();
            Some((Tensor::new([c], rm)?, Tensor::new([c], rv)?))
        }
    };
    let output = Tensor::new(x.shape().to_vec(), out)?;
    debug_finite!(output, x, gamma, beta);
    Ok(BatchNormOutput {
        output,
        cache: BatchNormCache {
            mode,
            mean,
            inv_std,
        },
        running,
    })
}

pub fn batchnorm_backward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let (n, c, s) = channel_layout(x.shape())?;
    check_param(gamma, c, "batchnorm gamma")?;
    x.same_shape(grad_out, "batchnorm grad_out")?;
    let (xs, gs, gm) = (x.data(), grad_out.data(), gamma.data());
    let mut gx = vec![T::zero(); xs.len()];
    let mut ggamma = vec![T::zero(); c];
    let mut gbeta = vec![T::zero(); c];
    let m = T::count(n * s);

    for ch in 0..c {
        let (mu, is) = (cache.mean[ch], cache.inv_std[ch]);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..n {
            let at = (b * c + ch) * s;
            for (&v, &g) in xs[at..at + s].iter().zip(&gs[at..at + s]) {
                sum_g += g;
                sum_gx += g * (v - mu) * is;
            }
        }
        ggamma[ch] = sum_gx;
        gbeta[ch] = sum_g;
        for b in 0..n {
            let at = (b * c + ch) * s;
            for ((o, &v), &g) in gx[at..at + s]
                .iter_mut()
                .zip(&xs[at..at + s])
                .zip(&gs[at..at + s])
            {
                *o = match cache.mode {
                    NormMode::Eval => g * gm[ch] * is,
                    NormMode::Train => {
                        let xhat = (v - mu) * is;
                        gm[ch] * is / m * (m * g - sum_g - xhat * sum_gx)
                    }
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        gamma: Tensor::new([c], ggamma)?,
        beta: Tensor::new([c], gbeta)?,
    })
}

/// Per-sample, per-group statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupNormCache<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Group normalization: statistics over each group of `C/groups` channels
/// and all spatial positions, separately per sample.
pub fn groupnorm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    groups: usize,
    eps: T,
) -> Result<(Tensor<T>, GroupNormCache<T>)> {
    let (n, c, s) = channel_layout(x.shape())?;
    check_param(gamma, c, "groupnorm gamma")?;
    check_param(beta, c, "groupnorm beta")?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "{c} channels cannot be split into {groups} groups"
        )));
    }
    let cg = c / groups;
    let span = cg * s;
    let xs = x.data();
    let mut mean = Vec::with_capacity(n * groups);
    let mut inv_std = Vec::with_capacity(n * groups);
    let mut out = vec![T::zero(); xs.len()];
    let m = T::count(span.max(1));
    for b in 0..n {
        for grp in 0..groups {
            let at = (b * c + grp * cg) * s;
            let block = &xs[at..at + span];
            let mu = block.iter().copied().sum::<T>() / m;
            let var = block.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / m;
            let is = T::one() / (var + eps).sqrt();
            for k in 0..cg {
                let ch = grp * cg + k;
                let row = at + k * s;
                for (o, &v) in out[row..row + s].iter_mut().zip(&xs[row..row + s]) {
                    *o = gamma.data()[ch] * ((v - mu) * is) + beta.data()[ch];
                }
            }
            mean.push(mu);
            inv_std.push(is);
        }
    }
    let out = Tensor::new(x.shape().to_vec(), out)?;
    debug_finite!(out, x, gamma, beta);
    Ok((out, GroupNormCache { mean, inv_std }))
}

pub fn groupnorm_backward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    groups: usize,
    cache: &GroupNormCache<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let (n, c, s) = channel_layout(x.shape())?;
    x.same_shape(grad_out, "groupnorm grad_out")?;
    let cg = c / groups;
    let m = T::count((cg * s).max(1));
    let (xs, gs, gm) = (x.data(), grad_out.data(), gamma.data());
    let mut gx = vec![T::zero(); xs.len()];
    let mut ggamma = vec![T::zero(); c];
    let mut gbeta = vec![T::zero(); c];
    for b in 0..n {
        for grp in 0..groups {
            let (mu, is) = (
                cache.mean[b * groups + grp],
                cache.inv_std[b * groups + grp],
            );
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for k in 0..cg {
                let ch = grp * cg + k;
                let row = (b * c + ch) * s;
                for (&v, &g) in xs[row..row + s].iter().zip(&gs[row..row + s]) {
                    let xhat = (v - mu) * is;
                    ggamma[ch] += g * xhat;
                    gbeta[ch] += g;
                    sum_d += g * gm[ch];
                    sum_dx += g * gm[ch] * xhat;
                }
            }
            for k in 0..cg {
                let ch = grp * cg + k;
                let row = (b * c + ch) * s;
                for ((o, &v), &g) in gx[row..row + s]
                    .iter_mut()
                    .zip(&xs[row..row + s])
                    .zip(&gs[row..row + s])
                {
                    let xhat = (v - mu) * is;
                    *o = is / m * (m * g * gm[ch] - sum_d - xhat * sum_dx);
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        gamma: Tensor::new([c], ggamma)?,
        beta: Tensor::new([c], gbeta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(c: usize) -> Tensor<f64> {
        Tensor::full([c], 1.0)
    }

    #[test]
    fn eval_identity() {
        let x = Tensor::<f64>::from_fn([2, 3, 2, 2, 2], |i| i as f64 - 10.0);
        let z = Tensor::zeros([3]);
        let y = batchnorm(&x, &ones(3), &z, &z, &ones(3), 0.0, 0.1, NormMode::Eval).unwrap();
        assert_eq!(y.output, x);
        assert!(y.running.is_none());
    }

    #[test]
    fn train_mean_three_variance_four() {
        // values 1 and 5: mean 3, biased variance 4
        let x = Tensor::<f64>::new([2, 1, 1, 1, 1], vec![1.0, 5.0]).unwrap();
        let y = batchnorm(
            &x,
            &Tensor::full([1], 2.0),
            &Tensor::full([1], 1.0),
            &Tensor::zeros([1]),
            &ones(1),
            0.0,
            0.1,
            NormMode::Train,
        )
        .unwrap();
        let expect: Vec<f64> = [1.0, 5.0]
            .iter()
            .map(|v| 2.0 * (v - 3.0) / 2.0 + 1.0)
            .collect();
        assert_eq!(y.output.data(), expect.as_slice());
        let (rm, rv) = y.running.unwrap();
        assert!((rm.data()[0] - 0.3).abs() < 1e-15);
        // unbiased variance 8
        assert!((rv.data()[0] - (0.9 + 0.8)).abs() < 1e-15);
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::<f64>::zeros([1, 2, 2, 2]);
        let z = Tensor::zeros([3]);
        assert!(matches!(
            batchnorm(&x, &z, &z, &z, &z, 1e-5, 0.1, NormMode::Eval),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn groupnorm_zero_mean_unit_var_per_group() {
        let x = Tensor::<f64>::from_fn([2, 4, 3, 3], |i| ((i * 7919) % 31) as f64);
        let (y, _) = groupnorm(&x, &ones(4), &Tensor::zeros([4]), 2, 0.0).unwrap();
        for b in 0..2 {
            for g in 0..2 {
                let block = &y.data()[(b * 4 + g * 2) * 9..][..18];
                let mu: f64 = block.iter().sum::<f64>() / 18.0;
                let var: f64 = block.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 18.0;
                assert!(mu.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
            }
        }
    }
}

use crate::error::{Error, Result};
use crate::ops::sigmoid;
use crate::real::Real;
use crate::tensor::Tensor;

/// Smoothing constant of the dice loss and the dice metrics.
pub const DICE_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Dice,
    Bce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Dice => "dice",
            LossKind::Bce => "bce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dice" => Some(LossKind::Dice),
            "bce" => Some(LossKind::Bce),
            _ => None,
        }
    }
}

fn check<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "loss target",
            expected: a.shape().to_vec(),
            actual: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Global soft dice loss on probabilities:
/// `1 − (2Σpt + ε)/(Σp + Σt + ε)` over every element of the batch, and its
/// gradient with respect to `p`.
pub fn dice_loss<T: Real>(p: &Tensor<T>, t: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    check(p, t)?;
    let eps = T::of(DICE_EPS);
    let two = T::of(2.0);
    let (mut inter, mut sp, mut st) = (T::zero(), T::zero(), T::zero());
    for (&pi, &ti) in p.data().iter().zip(t.data()) {
        inter += pi * ti;
        sp += pi;
        st += ti;
    }
    let num = two * inter + eps;
    let den = sp + st + eps;
    let loss = T::one() - num / den;
    let den2 = den * den;
    let grad = p
        .data()
        .iter()
        .zip(t.data())
        .map(|(_, &ti)| (num - two * ti * den) / den2)
        .collect();
    Ok((loss, Tensor::new(p.shape().to_vec(), grad)?))
}

/// Loss of `sigmoid(logits)` against `target` and its gradient with
/// respect to the logits.
pub fn loss_from_logits<T: Real>(
    kind: LossKind,
    logits: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    check(logits, target)?;
    match kind {
        LossKind::Dice => {
            let p = sigmoid(logits);
            let (loss, gp) = dice_loss(&p, target)?;
            let g = gp
                .data()
                .iter()
                .zip(p.data())
                .map(|(&g, &pi)| g * pi * (T::one() - pi))
                .collect();
            Ok((loss, Tensor::new(logits.shape().to_vec(), g)?))
        }
        LossKind::Bce => {
            let n = T::count(logits.len().max(1));
            let mut total = T::zero();
            let mut grad = alloc::vec::Vec::with_capacity(logits.len());
            for (&z, &t) in logits.data().iter().zip(target.data()) {
                // max(z, 0) − z·t + log(1 + e^{−|z|})
                total += z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p();
                let p = T::one() / (T::one() + (-z).exp());
                grad.push((p - t) / n);
            }
            Ok((total / n, Tensor::new(logits.shape().to_vec(), grad)?))
        }
    }
}

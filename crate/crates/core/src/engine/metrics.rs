//! Segmentation overlap metrics and ROC-based feature probing.
//!
//! Segmentation metrics take binary `N×C×…` tensors (case, class, spatial)
//! and average over the `C` classes. A class that is empty in both the
//! prediction and the ground truth scores 1.

use alloc::vec;
use alloc::vec::Vec;

use super::loss::DICE_EPS;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Per-class counts `(|P∩G|, |P|, |G|)` for case `n`, or pooled over all
/// cases when `n` is `None`.
fn overlaps<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, case: Option<usize>) -> Vec<[f64; 3]> {
    let (n, c) = (pred.shape()[0], pred.shape()[1]);
    let s: usize = pred.shape()[2..].iter().product();
    let mut out = vec![[0.0; 3]; c];
    let half = T::of(0.5);
    for ni in 0..n {
        if case.is_some_and(|k| k != ni) {
            continue;
        }
        for (ci, acc) in out.iter_mut().enumerate() {
            let off = (ni * c + ci) * s;
            for (&p, &g) in pred.data()[off..off + s]
                .iter()
                .zip(&target.data()[off..off + s])
            {
                let (p, g) = (p > half, g > half);
                acc[0] += f64::from(u8::from(p && g));
                acc[1] += f64::from(u8::from(p));
                acc[2] += f64::from(u8::from(g));
            }
        }
    }
    out
}

fn check<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() || pred.rank() < 2 {
        return Err(Error::ShapeMismatch {
            context: "metric inputs",
            expected: target.shape().to_vec(),
            actual: pred.shape().to_vec(),
        });
    }
    Ok(())
}

fn dice_of(&[i, p, g]: &[f64; 3]) -> f64 {
    if p + g == 0.0 {
        1.0
    } else {
        (2.0 * i + DICE_EPS) / (p + g + DICE_EPS)
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    v.sum::<f64>() / n as f64
}

/// Dice with voxels pooled across all cases, averaged over classes.
pub fn dice_global<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check(pred, target)?;
    Ok(mean(overlaps(pred, target, None).iter().map(dice_of)))
}

/// Mean over cases of the class-averaged dice of each case.
pub fn dice_per_case<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check(pred, target)?;
    let n = pred.shape()[0];
    Ok(mean((0..n).map(|k| {
        mean(overlaps(pred, target, Some(k)).iter().map(dice_of))
    })))
}

/// Intersection over union with voxels pooled across cases, averaged over
/// classes.
pub fn miou<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    check(pred, target)?;
    Ok(mean(overlaps(pred, target, None).iter().map(
        |&[i, p, g]| {
            let u = p + g - i;
            if u == 0.0 {
                1.0
            } else {
                i / u
            }
        },
    )))
}

/// 1-based ranks with ties replaced by their average rank.
pub fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Area under the ROC curve from precomputed midranks:
/// `(R₊ − n₊(n₊+1)/2) / (n₊·n₋)`. `None` when either class is empty.
pub fn auc_from_ranks(ranks: &[f64], labels: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut pos, mut rank_sum) = (0usize, 0.0);
    for (r, l) in ranks.iter().zip(labels) {
        if l {
            pos += 1;
            rank_sum += r;
        }
    }
    let neg = ranks.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Mann–Whitney ROC AUC with midrank ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    auc_from_ranks(&midranks(scores), labels.iter().copied())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMauc {
    /// Mean of the per-class values over the classes that were scored.
    pub mauc: f64,
    /// Best oriented channel AUC per class, `None` when skipped.
    pub per_class: Vec<Option<f64>>,
    /// Classes without positive or without negative voxels.
    pub skipped: usize,
}

/// Voxels that count as negatives when scoring a class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Negatives {
    /// Every voxel outside the class, background included.
    #[default]
    Rest,
    /// Voxels of the other foreground classes only; background voxels are
    /// left out of the ranking.
    OtherClasses,
}

/// Feature discriminability probe. `features` is `N×F×…`, `labels` holds
/// class ids `N×…` (`0` = background). For every class `1..=classes`, each
/// channel's voxel values are scored against the class mask by ROC AUC,
/// oriented as `max(AUC, 1−AUC)`; the class value is the best channel.
pub fn feature_mauc<T: Real>(
    features: &Tensor<T>,
    labels: &Tensor<T>,
    classes: usize,
) -> Result<FeatureMauc> {
    feature_mauc_with(features, labels, classes, Negatives::Rest)
}

pub fn feature_mauc_with<T: Real>(
    features: &Tensor<T>,
    labels: &Tensor<T>,
    classes: usize,
    negatives: Negatives,
) -> Result<FeatureMauc> {
    let fs = features.shape();
    if fs.len() < 3 || labels.shape()[0] != fs[0] || labels.shape()[1..] != fs[2..] {
        return Err(Error::ShapeMismatch {
            context: "feature_mauc labels",
            expected: [&fs[..1], &fs[2..]].concat(),
            actual: labels.shape().to_vec(),
        });
    }
    let (n, f) = (fs[0], fs[1]);
    let s: usize = fs[2..].iter().product();
    let all: Vec<i64> = labels
        .data()
        .iter()
        .map(|v| libm::round(v.f64()) as i64)
        .collect();
    // Flat (case, voxel) positions that take part in the ranking.
    let keep: Vec<usize> = match negatives {
        Negatives::Rest => (0..n * s).collect(),
        Negatives::OtherClasses => (0..n * s).filter(|&i| all[i] >= 1).collect(),
    };
    let ids: Vec<i64> = keep.iter().map(|&i| all[i]).collect();
    let mut best = vec![None::<f64>; classes];
    let mut column = Vec::with_capacity(keep.len());
    for ch in 0..f {
        column.clear();
        column.extend(
            keep.iter()
                .map(|&i| features.data()[((i / s) * f + ch) * s + i % s].f64()),
        );
        let ranks = midranks(&column);
        for (c, slot) in best.iter_mut().enumerate() {
            let id = c as i64 + 1;
            if let Some(a) = auc_from_ranks(&ranks, ids.iter().map(|&v| v == id)) {
                let a = a.max(1.0 - a);
                *slot = Some(slot.map_or(a, |b: f64| b.max(a)));
            }
        }
    }
    let scored: Vec<f64> = best.iter().flatten().copied().collect();
    Ok(FeatureMauc {
        mauc: mean(scored.iter().copied()),
        skipped: classes - scored.len(),
        per_class: best,
    })
}

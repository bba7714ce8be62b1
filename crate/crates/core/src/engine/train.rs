use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_from_logits, LossKind};
use super::metrics::dice_global;
use super::optim::{OptimState, Optimizer};
use crate::error::{Error, Result};
use crate::graph::{forward, LayerKind, ModelGraph};
use crate::ops::NormMode;
use crate::real::Real;
use crate::store::ParamStore;
use crate::tensor::Tensor;

/// One training example: `image` is `C×spatial`, `mask` holds class ids
/// (`0` = background) over the same spatial extents.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub image: Tensor<T>,
    pub mask: Tensor<T>,
}

/// Multiply the learning rate by `gamma` every `every` epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub every: usize,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: Optimizer,
    pub decay: Option<StepDecay>,
    /// Foreground classes; the network emits one logit channel per class.
    pub classes: usize,
    /// Random spatial crop applied to every sample of every step.
    pub crop: Option<Vec<usize>>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss.
    pub loss: f64,
    /// Dice of the training-mode predictions, pooled over the epoch.
    pub dice: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss,dice\n");
        for r in &self.records {
            s += &format!("{},{:e},{:.9},{:.9}\n", r.epoch, r.lr, r.loss, r.dice);
        }
        s
    }
}

/// `N×classes×spatial` indicator of `mask == c+1` per channel `c`.
pub fn one_hot<T: Real>(masks: &[&Tensor<T>], classes: usize) -> Result<Tensor<T>> {
    let spatial = masks
        .first()
        .map(|m| m.shape().to_vec())
        .unwrap_or_default();
    let s: usize = spatial.iter().product();
    let mut data = vec![T::zero(); masks.len() * classes * s];
    for (n, m) in masks.iter().enumerate() {
        if m.shape() != spatial.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "mask batch",
                expected: spatial.clone(),
                actual: m.shape().to_vec(),
            });
        }
        for (i, &v) in m.data().iter().enumerate() {
            let id = libm::round(v.f64()) as i64;
            if id >= 1 && (id as usize) <= classes {
                data[(n * classes + id as usize - 1) * s + i] = T::one();
            }
        }
    }
    let mut shape = vec![masks.len(), classes];
    shape.extend(spatial);
    Tensor::new(shape, data)
}

/// Stacks `C×spatial` tensors into `N×C×spatial`.
pub fn stack<T: Real>(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let shape = items
        .first()
        .map(|t| t.shape().to_vec())
        .unwrap_or_default();
    let mut data = Vec::with_capacity(items.len() * shape.iter().product::<usize>());
    for t in items {
        if t.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "batch",
                expected: shape.clone(),
                actual: t.shape().to_vec(),
            });
        }
        data.extend_from_slice(t.data());
    }
    let mut full = vec![items.len()];
    full.extend(shape);
    Tensor::new(full, data)
}

/// Copies the window starting at `origin` with extents `size` from the
/// trailing axes of `t` (leading axes are kept whole).
pub fn crop_window<T: Real>(t: &Tensor<T>, origin: &[usize], size: &[usize]) -> Result<Tensor<T>> {
    let lead = t.rank() - size.len();
    let mut pads = vec![(0, 0); t.rank()];
    for (a, (&o, &s)) in origin.iter().zip(size).enumerate() {
        let e = t.shape()[lead + a];
        if o + s > e {
            return Err(Error::InvalidConfig(format!(
                "crop {o}+{s} exceeds extent {e} on axis {}",
                lead + a
            )));
        }
        pads[lead + a] = (o, e - o - s);
    }
    crate::ops::crop(t, &pads)
}

fn batch<T: Real>(
    data: &[Sample<T>],
    idx: &[usize],
    crop: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
    classes: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut images = Vec::with_capacity(idx.len());
    let mut masks = Vec::with_capacity(idx.len());
    for &i in idx {
        let s = &data[i];
        match crop {
            Some(size) => {
                let ext = s.mask.shape();
                let origin: Vec<usize> = ext
                    .iter()
                    .zip(size)
                    .map(|(&e, &c)| rng.random_range(0..=e.saturating_sub(c)))
                    .collect();
                images.push(crop_window(&s.image, &origin, size)?);
                masks.push(crop_window(&s.mask, &origin, size)?);
            }
            None => {
                images.push(s.image.clone());
                masks.push(s.mask.clone());
            }
        }
    }
    let x = stack(&images.iter().collect::<Vec<_>>())?;
    let y = one_hot(&masks.iter().collect::<Vec<_>>(), classes)?;
    Ok((x, y))
}

/// Mini-batch training. Sample order and crops are drawn from a ChaCha8
/// stream seeded with `cfg.seed`, so a run is a pure function of its
/// inputs. Aborts with [`Error::Diverged`] on a non-finite loss.
pub fn train_loop<T: Real>(
    g: &ModelGraph,
    params: &mut ParamStore<T>,
    data: &[Sample<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    let mut history = History::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "training needs data and a positive batch size".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimState::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let out_name = g.outputs()[0].clone();
    for epoch in 0..cfg.epochs {
        let lr = match cfg.decay {
            Some(d) if d.every > 0 => {
                cfg.optimizer.lr() * libm::pow(d.gamma, (epoch / d.every) as f64)
            }
            _ => cfg.optimizer.lr(),
        };
        let opt = cfg.optimizer.with_lr(lr);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = batch(data, idx, cfg.crop.as_deref(), &mut rng, cfg.classes)?;
            let fw = forward(g, params, &x, NormMode::Train)?;
            let logits = fw.outputs()[0];
            let (loss, grad) = loss_from_logits(cfg.loss, logits, &y)?;
            if !loss.f64().is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: loss.f64(),
                });
            }
            let grads = fw.backward(params, &[(out_name.as_str(), &grad)])?;
            fw.apply_running(params)?;
            opt.step(params, &grads.params, &mut state)?;
            loss_sum += loss.f64();
            steps += 1;
            preds.push(logits.map(|z| if z > T::zero() { T::one() } else { T::zero() }));
            targets.push(y);
        }
        let dice = dice_global(&concat_cases(&preds)?, &concat_cases(&targets)?)?;
        let rec = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / steps as f64,
            dice,
        };
        on_epoch(&rec);
        history.records.push(rec);
    }
    Ok(history)
}

fn concat_cases<T: Real>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|p| p.shape()[0]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(shape, data)
}

/// Replaces every batchnorm's running statistics with the plain average of
/// its train-mode batch statistics over `images`, taken in order in batches
/// of `batch_size`. Only the running buffers change.
pub fn recalibrate_norm<T: Real>(
    g: &ModelGraph,
    params: &mut ParamStore<T>,
    images: &[&Tensor<T>],
    batch_size: usize,
) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    for (k, chunk) in images.chunks(batch_size).enumerate() {
        // Momentum 1/(k+1) turns the running update into a cumulative mean.
        let m = 1.0 / (k + 1) as f64;
        let nodes = g
            .nodes()
            .iter()
            .cloned()
            .map(|mut n| {
                if let LayerKind::BatchNorm { momentum, .. } = &mut n.kind {
                    *momentum = m;
                }
                n
            })
            .collect();
        let gk = ModelGraph::new(g.dim(), g.input(), nodes, g.outputs().to_vec())?;
        forward(&gk, params, &stack(chunk)?, NormMode::Train)?.apply_running(params)?;
    }
    Ok(())
}

/// Eval-mode logits for each sample, one at a time.
pub fn predict<T: Real>(
    g: &ModelGraph,
    params: &ParamStore<T>,
    images: &[&Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    images
        .iter()
        .map(|img| {
            let x = stack(&[img])?;
            let fw = forward(g, params, &x, NormMode::Eval)?;
            Ok(fw.into_output())
        })
        .collect()
}

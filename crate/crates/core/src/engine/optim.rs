use crate::error::{Error, Result};
use crate::real::Real;
use crate::store::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Adam(AdamConfig),
    Sgd(SgdConfig),
}

impl Optimizer {
    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::Adam(c) => c.lr,
            Optimizer::Sgd(c) => c.lr,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        match &mut self {
            Optimizer::Adam(c) => c.lr = lr,
            Optimizer::Sgd(c) => c.lr = lr,
        }
        self
    }

    pub fn step<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        grads: &ParamStore<T>,
        state: &mut OptimState<T>,
    ) -> Result<()> {
        match self {
            Optimizer::Adam(c) => adam_step(params, grads, state, c),
            Optimizer::Sgd(c) => sgd_step(params, grads, state, c),
        }
    }
}

/// Moment estimates keyed like the parameters. For SGD `first` holds the
/// velocity and `second` stays empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimState<T> {
    pub step: u64,
    pub first: ParamStore<T>,
    pub second: ParamStore<T>,
}

impl<T: Real> OptimState<T> {
    pub fn new() -> Self {
        Self {
            step: 0,
            first: ParamStore::new(),
            second: ParamStore::new(),
        }
    }
}

fn moment<'s, T: Real>(
    store: &'s mut ParamStore<T>,
    name: &str,
    like: &Tensor<T>,
) -> Result<&'s mut Tensor<T>> {
    if !store.contains(name) {
        store.insert(name, Tensor::zeros(like.shape().to_vec()))?;
    }
    Ok(store.get_mut(name).expect("inserted above"))
}

fn target<'p, T: Real>(
    params: &'p mut ParamStore<T>,
    name: &str,
    g: &Tensor<T>,
) -> Result<&'p mut Tensor<T>> {
    let p = params
        .get_mut(name)
        .ok_or_else(|| Error::MissingParam(name.into()))?;
    if p.shape() != g.shape() {
        return Err(Error::ShapeMismatch {
            context: "optimizer gradient",
            expected: p.shape().to_vec(),
            actual: g.shape().to_vec(),
        });
    }
    Ok(p)
}

/// Bias-corrected Adam: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `θ ← θ − lr·m̂/(√v̂ + ε)`. Weight decay, when set, is added to the
/// gradient. Only parameters present in `grads` are touched.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    state: &mut OptimState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (lr, eps, wd) = (T::of(cfg.lr), T::of(cfg.eps), T::of(cfg.weight_decay));
    for (name, g) in grads.iter() {
        let p = target(params, name, g)?;
        let m = moment(&mut state.first, name, g)?;
        let v = moment(&mut state.second, name, g)?;
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gi = gi + wd * *pi;
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mh = *mi / c1;
            let vh = *vi / c2;
            *pi -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `u ← μu + g`, `θ ← θ − lr·u`.
pub fn sgd_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    state: &mut OptimState<T>,
    cfg: &SgdConfig,
) -> Result<()> {
    state.step += 1;
    let (lr, mu, wd) = (T::of(cfg.lr), T::of(cfg.momentum), T::of(cfg.weight_decay));
    for (name, g) in grads.iter() {
        let p = target(params, name, g)?;
        let u = moment(&mut state.first, name, g)?;
        for ((pi, &gi), ui) in p.data_mut().iter_mut().zip(g.data()).zip(u.data_mut()) {
            *ui = mu * *ui + gi + wd * *pi;
            *pi -= lr * *ui;
        }
    }
    Ok(())
}

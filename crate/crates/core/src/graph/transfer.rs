//! Loading 2D weights into converted 3D graphs, and seeded initialization
//! for everything that is not loaded.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KernelSource, LayerKind, ModelGraph, ParamSlot, SlotRole};
use crate::error::{Error, Result};
use crate::real::{DType, Real};
use crate::store::{AnyTensor, ParamStore, WeightStore};
use crate::tensor::Tensor;

/// Which parameter slots receive 2D weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scope {
    Whole,
    /// Slots whose name starts with any of the prefixes.
    Prefixes(Vec<String>),
}

impl Scope {
    pub fn contains(&self, slot: &str) -> bool {
        match self {
            Scope::Whole => true,
            Scope::Prefixes(ps) => ps.iter().any(|p| slot.starts_with(p.as_str())),
        }
    }
}

/// Repeats a `(C_o, C_i, K_a, K_b)` kernel `k` times along spatial `axis`
/// of a rank-5 kernel and divides by `k`, so summing over that axis gives
/// back the 2D kernel.
pub fn inflate_kernel<T: Real>(w: &Tensor<T>, k: usize, axis: usize) -> Result<Tensor<T>> {
    let s = w.shape();
    if s.len() != 4 {
        return Err(Error::RankMismatch {
            expected: 4,
            actual: s.len(),
        });
    }
    if axis > 2 || k == 0 {
        return Err(Error::InvalidConfig(
            "inflation needs axis ≤ 2 and k ≥ 1".into(),
        ));
    }
    let mut spatial = [0; 3];
    let mut rest = [s[2], s[3]].into_iter();
    for (a, e) in spatial.iter_mut().enumerate() {
        *e = if a == axis {
            k
        } else {
            rest.next().unwrap_or(1)
        };
    }
    let scale = T::one() / T::count(k);
    let shape = [s[0], s[1], spatial[0], spatial[1], spatial[2]];
    let plane = s[2] * s[3];
    let src = w.data();
    Ok(Tensor::from_fn(shape, |i| {
        let pos = i % (spatial[0] * spatial[1] * spatial[2]);
        let oc = i / (spatial[0] * spatial[1] * spatial[2]);
        let idx = [
            pos / (spatial[1] * spatial[2]),
            pos / spatial[2] % spatial[1],
            pos % spatial[2],
        ];
        let kept: Vec<usize> = (0..3).filter(|&a| a != axis).map(|a| idx[a]).collect();
        src[oc * plane + kept[0] * s[3] + kept[1]] * scale
    }))
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fresh value for one slot. Kernels are uniform in `±√(6/fan_in)` with
/// `fan_in = C_i·(kernel volume)`; biases, norm shifts, running means and
/// logits are zero; norm scales and running variances are one. Each slot
/// draws from its own stream keyed by `seed` and the slot name, so values
/// do not depend on which other slots exist.
pub fn init_slot<T: Real>(slot: &ParamSlot, seed: u64) -> Tensor<T> {
    match slot.role {
        SlotRole::Weight => {
            let fan_in: usize = slot.shape[1..].iter().product::<usize>().max(1);
            let bound = libm::sqrt(6.0 / fan_in as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&slot.name));
            Tensor::from_fn(slot.shape.clone(), |_| {
                T::of(rng.random_range(-bound..bound))
            })
        }
        SlotRole::Gamma | SlotRole::RunningVar => Tensor::full(slot.shape.clone(), T::one()),
        SlotRole::Bias | SlotRole::Beta | SlotRole::RunningMean | SlotRole::Logits => {
            Tensor::zeros(slot.shape.clone())
        }
    }
}

/// Freshly initialized parameters for every slot of `g`.
pub fn init_params<T: Real>(g: &ModelGraph, seed: u64) -> ParamStore<T> {
    let mut store = ParamStore::new();
    for slot in g.param_slots() {
        let t = init_slot(&slot, seed);
        store
            .insert(slot.name, t)
            .expect("graph validation guarantees unique slot names");
    }
    store
}

fn non_unit(shape: &[usize]) -> Vec<usize> {
    shape.iter().copied().filter(|&e| e != 1).collect()
}

fn transfer_slot<T: Real>(
    src: &Tensor<T>,
    slot: &ParamSlot,
    source: KernelSource,
) -> Result<Tensor<T>> {
    let incompatible = || Error::ShapeMismatch {
        context: "transferred parameter",
        expected: slot.shape.clone(),
        actual: src.shape().to_vec(),
    };
    match (slot.role, source) {
        (SlotRole::Weight, KernelSource::Inflate(axis)) => {
            let k = slot.shape[2 + axis];
            let t = inflate_kernel(src, k, axis)?;
            if t.shape() != slot.shape.as_slice() {
                return Err(incompatible());
            }
            Ok(t)
        }
        _ => {
            if src.len() != slot.shape.iter().product::<usize>()
                || non_unit(src.shape()) != non_unit(&slot.shape)
            {
                return Err(incompatible());
            }
            src.clone().reshape(slot.shape.clone())
        }
    }
}

fn typed<T: Real>(src: &Tensor<T>, slot: &ParamSlot, source: KernelSource) -> Result<AnyTensor>
where
    AnyTensor: From<Tensor<T>>,
{
    transfer_slot(src, slot, source).map(AnyTensor::from)
}

/// Builds the full 3D parameter set from a 2D store.
///
/// In-scope slots are copied (unit axes inserted as needed) or inflated;
/// values are never rescaled otherwise. Out-of-scope slots, Soft-ACS
/// logits and kernels of randomly initialized convolutions get
/// [`init_slot`] values. Copied tensors keep their element type; fresh
/// ones use the element type of the source store (f32 if it is empty).
/// The source store is not modified.
pub fn transfer_weights(
    src: &WeightStore,
    g3d: &ModelGraph,
    scope: &Scope,
    seed: u64,
) -> Result<WeightStore> {
    let dtype = src.iter().next().map_or(DType::F32, |(_, t)| t.dtype());
    let mut out = WeightStore::new();
    for node in g3d.nodes() {
        let source = match &node.kind {
            LayerKind::Conv { source, .. } => *source,
            _ => KernelSource::Direct,
        };
        for slot in node.param_slots(g3d.dim()) {
            let fresh = slot.role == SlotRole::Logits
                || source == KernelSource::Random
                || !scope.contains(&slot.name);
            let value = if fresh {
                match dtype {
                    DType::F32 => AnyTensor::F32(init_slot(&slot, seed)),
                    DType::F64 => AnyTensor::F64(init_slot(&slot, seed)),
                }
            } else {
                let s = src
                    .get(&slot.name)
                    .ok_or_else(|| Error::MissingParam(slot.name.clone()))?;
                match s {
                    AnyTensor::F32(t) => typed(t, &slot, source),
                    AnyTensor::F64(t) => typed(t, &slot, source),
                }
                .map_err(|e| e.at(&node.name))?
            };
            out.insert(slot.name, value)?;
        }
    }
    Ok(out)
}

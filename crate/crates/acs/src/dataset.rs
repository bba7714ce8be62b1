//! Datasets stored in the weight container as `sample/{i}/image` and
//! `sample/{i}/mask` pairs, indices contiguous from 0.

use acs_core::data::ShapeSample;
use acs_core::engine::Sample;
use acs_core::{AnyTensor, Tensor, WeightStore};

pub fn image_name(i: usize) -> String {
    format!("sample/{i}/image")
}

pub fn mask_name(i: usize) -> String {
    format!("sample/{i}/mask")
}

pub fn to_store(samples: &[Sample<f32>]) -> WeightStore {
    let mut s = WeightStore::new();
    for (i, x) in samples.iter().enumerate() {
        s.insert(image_name(i), AnyTensor::F32(x.image.clone()))
            .expect("names are unique");
        s.insert(mask_name(i), AnyTensor::F32(x.mask.clone()))
            .expect("names are unique");
    }
    s
}

pub fn shapes_to_store(samples: &[ShapeSample]) -> WeightStore {
    let samples: Vec<Sample<f32>> = samples
        .iter()
        .map(|s| Sample {
            image: s.image.clone(),
            mask: s.mask.clone(),
        })
        .collect();
    to_store(&samples)
}

fn tensor(store: &WeightStore, name: &str) -> Result<Tensor<f32>, String> {
    match store.get(name) {
        Some(AnyTensor::F32(t)) => Ok(t.clone()),
        Some(AnyTensor::F64(t)) => Ok(t.cast()),
        None => Err(format!("missing entry `{name}`")),
    }
}

/// Reads samples `0..n`; every entry of the store must belong to one.
pub fn from_store(store: &WeightStore) -> Result<Vec<Sample<f32>>, String> {
    if !store.len().is_multiple_of(2) {
        return Err(format!(
            "{} entries do not form image/mask pairs",
            store.len()
        ));
    }
    let n = store.len() / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let image = tensor(store, &image_name(i))?;
        let mask = tensor(store, &mask_name(i))?;
        if image.shape().get(1..) != Some(mask.shape()) {
            return Err(format!(
                "sample {i}: image {:?} and mask {:?} disagree",
                image.shape(),
                mask.shape()
            ));
        }
        out.push(Sample { image, mask });
    }
    Ok(out)
}

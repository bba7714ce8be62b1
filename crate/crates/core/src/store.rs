//! Ordered name → tensor mappings.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::{DType, Real};
use crate::tensor::Tensor;

/// A tensor of either supported element type.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyTensor::F32(t) => t.len(),
            AnyTensor::F64(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Converts to `Tensor<T>`, casting when the element type differs.
    pub fn to_real<T: Real>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    pub fn bit_eq(&self, other: &AnyTensor) -> bool {
        match (self, other) {
            (AnyTensor::F32(a), AnyTensor::F32(b)) => {
                a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (AnyTensor::F64(a), AnyTensor::F64(b)) => a.bit_eq(b),
            _ => false,
        }
    }
}

impl<T: Real> From<Tensor<T>> for AnyTensor {
    fn from(t: Tensor<T>) -> Self {
        // Real is only implemented for f32 and f64.
        match T::DTYPE {
            DType::F32 => AnyTensor::F32(t.cast()),
            DType::F64 => AnyTensor::F64(t.cast()),
        }
    }
}

/// Insertion-ordered map from unique names to values.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensors<V> {
    entries: Vec<(String, V)>,
    index: BTreeMap<String, usize>,
}

impl<V> Default for NamedTensors<V> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

pub type WeightStore = NamedTensors<AnyTensor>;
pub type ParamStore<T> = NamedTensors<Tensor<T>>;

impl<V> NamedTensors<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new entry; names must be non-empty, at most 255 bytes and
    /// not already present.
    pub fn insert(&mut self, name: impl Into<String>, value: V) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.len() > 255 {
            return Err(Error::InvalidConfig(alloc::format!(
                "tensor name must be 1..=255 bytes, got {} bytes",
                name.len()
            )));
        }
        if self.index.contains_key(&name) {
            return Err(Error::InvalidConfig(alloc::format!(
                "duplicate tensor name `{name}`"
            )));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    /// Inserts or overwrites in place (keeps the original position).
    pub fn upsert(&mut self, name: &str, value: V) -> Result<()> {
        match self.index.get(name) {
            Some(&i) => {
                self.entries[i].1 = value;
                Ok(())
            }
            None => self.insert(name, value),
        }
    }

    pub fn get(&self, name: &str) -> Option<&V> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut V> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&V> {
        self.get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &V)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut V)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &V) -> U) -> NamedTensors<U> {
        NamedTensors {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), f(k, v)))
                .collect(),
            index: self.index.clone(),
        }
    }
}

impl<V> FromIterator<(String, V)> for NamedTensors<V> {
    /// Panics on invalid or duplicate names; use [`NamedTensors::insert`] for
    /// fallible construction.
    fn from_iter<I: IntoIterator<Item = (String, V)>>(iter: I) -> Self {
        let mut s = Self::new();
        for (k, v) in iter {
            s.insert(k, v).expect("invalid entry");
        }
        s
    }
}

impl WeightStore {
    pub fn to_params<T: Real>(&self) -> ParamStore<T> {
        self.map(|_, t| t.to_real())
    }

    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((ka, a), (kb, b))| ka == kb && a.bit_eq(b))
    }
}

impl<T: Real> ParamStore<T> {
    pub fn to_weights(&self) -> WeightStore {
        self.map(|_, t| AnyTensor::from(t.clone()))
    }

    pub fn total_elements(&self) -> usize {
        self.iter().map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn keeps_insertion_order() {
        let mut s = ParamStore::<f32>::new();
        s.insert("z", Tensor::scalar(1.0)).unwrap();
        s.insert("a", Tensor::scalar(2.0)).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["z", "a"]);
        s.upsert("z", Tensor::scalar(3.0)).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["z", "a"]);
        assert_eq!(s.get("z").unwrap().data(), &[3.0]);
    }

    #[test]
    fn rejects_bad_names() {
        let mut s = ParamStore::<f32>::new();
        assert!(s.insert("", Tensor::scalar(1.0)).is_err());
        assert!(s.insert("x".repeat(256), Tensor::scalar(1.0)).is_err());
        s.insert("x".repeat(255), Tensor::scalar(1.0)).unwrap();
        s.insert("a", Tensor::scalar(1.0)).unwrap();
        assert!(s.insert("a", Tensor::scalar(1.0)).is_err());
    }
}

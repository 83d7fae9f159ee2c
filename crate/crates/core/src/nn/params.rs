use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Real, Tensor};
use crate::error::{contract_err, shape_err, Error, Result};

/// A named tensor with a trainable flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Named parameters in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T = f32> {
    entries: Vec<Parameter<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Adds a trainable parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(contract_err!("duplicate parameter `{}`", name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Parameter {
            name,
            tensor,
            trainable: true,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].tensor),
            None => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let slot = self.tensor_mut(name)?;
        if slot.shape() != tensor.shape() {
            return Err(shape_err!(
                "`{}` has shape {:?}, got {:?}",
                name,
                slot.shape(),
                tensor.shape()
            ));
        }
        *slot = tensor;
        Ok(())
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

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.entries.iter_mut()
    }

    /// Sets the trainable flag on every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for p in self.entries.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.trainable = trainable;
        }
    }

    pub fn freeze_all(&mut self) {
        self.set_trainable("", false);
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.name.as_str())
    }

    /// Total number of scalars held by trainable parameters.
    pub fn trainable_scalars(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Copies every parameter of `other` into `self` (names must be new).
    pub fn extend(&mut self, other: &Self) -> Result<()> {
        for p in other.iter() {
            self.insert(p.name.clone(), p.tensor.clone())?;
            let last = self.entries.len() - 1;
            self.entries[last].trainable = p.trainable;
        }
        Ok(())
    }

    /// Parameters whose names start with `prefix`, renamed with `new_prefix`.
    pub fn subset_renamed(&self, prefix: &str, new_prefix: &str) -> Result<Self> {
        let mut out = Self::new();
        for p in self.iter().filter(|p| p.name.starts_with(prefix)) {
            let mut name = String::from(new_prefix);
            name.push_str(&p.name[prefix.len()..]);
            out.insert(name, p.tensor.clone())?;
            let last = out.entries.len() - 1;
            out.entries[last].trainable = p.trainable;
        }
        Ok(out)
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    trainable: p.trainable,
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`.
pub fn init_xavier<T: Real>(
    rng: &mut impl rand::RngCore,
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::new(alloc::vec![rows, cols], data).expect("consistent shape")
}

/// Zero bias row.
pub fn init_bias<T: Real>(cols: usize) -> Tensor<T> {
    Tensor::zeros(&[1, cols])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn names_are_unique() {
        let mut s = ParameterStore::<f32>::new();
        s.insert("a", Tensor::zeros(&[1, 1])).unwrap();
        assert!(s.insert("a", Tensor::zeros(&[1, 1])).is_err());
    }

    #[test]
    fn xavier_bounds() {
        let mut r = rng::for_purpose(1, "init");
        let t: Tensor<f32> = init_xavier(&mut r, 10, 20, 10, 20);
        let b = (6.0f32 / 30.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= b));
    }

    #[test]
    fn subset_renames_and_keeps_flags() {
        let mut s = ParameterStore::<f32>::new();
        s.insert("voxel.mlp1.w", Tensor::zeros(&[1, 1])).unwrap();
        s.insert("range.conv1.w", Tensor::zeros(&[1, 1])).unwrap();
        s.set_trainable("voxel", false);
        let sub = s.subset_renamed("voxel.", "student.").unwrap();
        assert_eq!(sub.len(), 1);
        assert!(!sub.get("student.mlp1.w").unwrap().trainable);
    }
}

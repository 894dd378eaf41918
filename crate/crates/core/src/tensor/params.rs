use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named parameter tensors with a stable flat index over every scalar.
///
/// Flat order is insertion order of the tensors, then row-major within each
/// tensor. Gradients use the same type so that optimizer state and gradient
/// checks can walk parameters and gradients in lockstep.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Argument(format!("duplicate parameter {name}")));
        }
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(self.tensors.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ParameterStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// `(tensor index, offset)` of flat index `i`.
    pub fn locate(&self, mut i: usize) -> Option<(usize, usize)> {
        for (t, tensor) in self.tensors.iter().enumerate() {
            if i < tensor.len() {
                return Some((t, i));
            }
            i -= tensor.len();
        }
        None
    }

    pub fn flat_get(&self, i: usize) -> f64 {
        let (t, o) = self.locate(i).expect("flat index in range");
        self.tensors[t].data()[o]
    }

    pub fn flat_set(&mut self, i: usize, value: f64) {
        let (t, o) = self.locate(i).expect("flat index in range");
        self.tensors[t].data_mut()[o] = value;
    }

    /// Human-readable label for flat index `i`, e.g. `lstm.0.w_hh[17]`.
    pub fn flat_label(&self, i: usize) -> String {
        match self.locate(i) {
            Some((t, o)) => format!("{}[{o}]", self.names[t]),
            None => format!("<out of range {i}>"),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// First tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }
}

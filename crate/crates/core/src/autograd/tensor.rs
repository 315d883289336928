use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major rank-2 array of `f64` with an accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: (usize, usize),
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: (usize, usize), values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.0 * shape.1 {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: shape,
                rhs: (values.len(), 1),
            });
        }
        Ok(Tensor {
            shape,
            grad: vec![0.0; values.len()],
            values,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Tensor::new(shape, vec![0.0; shape.0 * shape.1]).unwrap()
    }

    pub fn row(values: Vec<f64>) -> Self {
        Tensor::new((1, values.len()), values).unwrap()
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new((1, 1), vec![value]).unwrap()
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng>(shape: (usize, usize), bound: f64, rng: &mut R) -> Self {
        let values = (0..shape.0 * shape.1)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Tensor::new(shape, values).unwrap()
    }

    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Named tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Like [`get`](Self::get) but reports a missing name as an error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("parameter {name} is missing")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }
}

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

/// A trainable tensor with its gradient accumulator and Adam moments.
///
/// The gradient sits behind a `RefCell` so a computation graph holding shared
/// borrows of many parameters can still accumulate into them on backward.
#[derive(Debug)]
pub struct Param {
    name: String,
    value: Tensor,
    grad: RefCell<Vec<f64>>,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let n = value.len();
        Self {
            name: name.into(),
            value,
            grad: RefCell::new(vec![0.0; n]),
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> Ref<'_, Vec<f64>> {
        self.grad.borrow()
    }

    pub fn accumulate(&self, g: &[f64]) {
        let mut grad = self.grad.borrow_mut();
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    pub(crate) fn grad_mut(&self) -> std::cell::RefMut<'_, Vec<f64>> {
        self.grad.borrow_mut()
    }

    pub fn zero_grad(&self) {
        self.grad.borrow_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub(crate) fn set_moments(&mut self, m: Vec<f64>, v: Vec<f64>) -> Result<()> {
        if m.len() != self.value.len() || v.len() != self.value.len() {
            return Err(Error::ShapeMismatch {
                expected: self.value.len(),
                got: m.len().min(v.len()),
            });
        }
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Same values, zeroed gradient and moments.
    pub fn fresh_copy(&self) -> Self {
        Param::new(self.name.clone(), self.value.clone())
    }
}

/// An ordered collection of parameters updated together by one optimizer.
#[derive(Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    /// Optimizer steps taken, for bias correction.
    pub(crate) step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.params.push(Param::new(name, value));
        self.params.len() - 1
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(Param::zero_grad);
    }

    pub fn grad_sq_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad().iter().map(|g| g * g).sum::<f64>())
            .sum()
    }

    pub fn scale_grads(&self, factor: f64) {
        for p in &self.params {
            p.grad_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Deep copy of values with fresh optimizer state.
    pub fn clone_params(&self) -> Self {
        Self {
            params: self.params.iter().map(Param::fresh_copy).collect(),
            step: 0,
        }
    }

    /// Bitwise equality of parameter names, shapes and values.
    pub fn same_values(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape == b.value.shape
                    && a.value
                        .data
                        .iter()
                        .zip(&b.value.data)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

//! Named trainable tensors and their gradient accumulators.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

/// A trainable tensor with a same-shape gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    name: String,
    pub value: Tensor2D<T>,
    pub grad: Tensor2D<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor2D<T>) -> Self {
        let grad = Tensor2D::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Tensor2D::zeros(rows, cols))
    }

    /// i.i.d. `Uniform(−scale, scale)` entries.
    pub fn uniform(name: impl Into<String>, rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Self {
        Self::new(name, Tensor2D::from_fn(rows, cols, |_, _| T::lit(rng.uniform(-scale, scale))))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Replaces the value, keeping the shape.
    pub fn assign(&mut self, value: &Tensor2D<T>) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(Error::dim("assign", self.value.shape(), value.shape()));
        }
        self.value = value.clone();
        Ok(())
    }
}

/// Anything that owns parameters in a fixed, canonical order.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<&Parameter<T>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Global L2 norm of all gradients.
    fn grad_norm(&self) -> T {
        self.params().iter().map(|p| p.grad.sum_sq()).sum::<T>().sqrt()
    }
}

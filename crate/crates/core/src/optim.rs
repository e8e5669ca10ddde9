//! RMSprop and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one accumulator per trainable parameter.
///
/// ```text
/// E[g²] ← ρ E[g²] + (1 − ρ) g²
/// θ     ← θ − η g / √(E[g²] + ε)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct RmspropState<T> {
    pub config: RmspropConfig,
    pub mean_square: Vec<Tensor2D<T>>,
    pub steps: u64,
}

impl<T: Scalar> RmspropState<T> {
    pub fn new<'a>(config: RmspropConfig, params: impl IntoIterator<Item = &'a Parameter<T>>) -> Self {
        let mean_square = params.into_iter().map(|p| Tensor2D::zeros(p.value.rows(), p.value.cols())).collect();
        RmspropState {
            config,
            mean_square,
            steps: 0,
        }
    }

    /// Applies one update from each parameter's `grad`. Gradients are left in place.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Parameter<T>>) -> Result<()> {
        let rho = T::lit(self.config.decay);
        let one_minus = T::one() - rho;
        let lr = T::lit(self.config.learning_rate);
        let eps = T::lit(self.config.epsilon);
        let mut n = 0;
        for (p, acc) in params.into_iter().zip(self.mean_square.iter_mut()) {
            if acc.shape() != p.value.shape() {
                return Err(Error::dim("rmsprop_step", acc.shape(), p.value.shape()));
            }
            let grads = p.grad.as_slice();
            for ((theta, e), &g) in p.value.as_mut_slice().iter_mut().zip(acc.as_mut_slice()).zip(grads) {
                *e = rho * *e + one_minus * g * g;
                *theta -= lr * g / (*e + eps).sqrt();
            }
            n += 1;
        }
        if n != self.mean_square.len() {
            return Err(Error::Argument(format!(
                "rmsprop state has {} accumulators but {n} parameters were given",
                self.mean_square.len()
            )));
        }
        self.steps += 1;
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm<'a, T: Scalar>(params: impl IntoIterator<Item = &'a mut Parameter<T>>, max_norm: f64) -> T {
    let params: Vec<&mut Parameter<T>> = params.into_iter().collect();
    let norm = params.iter().map(|p| p.grad.sum_sq()).sum::<T>().sqrt();
    let max = T::lit(max_norm);
    if norm > max {
        let s = max / norm;
        for p in params {
            p.grad.as_mut_slice().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

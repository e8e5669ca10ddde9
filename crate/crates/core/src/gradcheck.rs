//! Centered finite-difference validation of hand-written backward passes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

/// A scalar-valued function of several tensors with an analytic gradient.
pub trait Differentiable<T: Scalar> {
    fn value(&mut self, inputs: &[Tensor2D<T>]) -> Result<T>;

    /// One gradient tensor per input, same shapes.
    fn gradient(&mut self, inputs: &[Tensor2D<T>]) -> Result<Vec<Tensor2D<T>>>;
}

/// Adapter from a pair of closures.
pub struct FnPair<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<T, V, G> Differentiable<T> for FnPair<V, G>
where
    T: Scalar,
    V: FnMut(&[Tensor2D<T>]) -> Result<T>,
    G: FnMut(&[Tensor2D<T>]) -> Result<Vec<Tensor2D<T>>>,
{
    fn value(&mut self, inputs: &[Tensor2D<T>]) -> Result<T> {
        (self.value)(inputs)
    }

    fn gradient(&mut self, inputs: &[Tensor2D<T>]) -> Result<Vec<Tensor2D<T>>> {
        (self.gradient)(inputs)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport<T> {
    pub max_rel_error: T,
    /// `(input index, flat coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Compares the analytic gradient with centered differences at every input coordinate.
///
/// Error per coordinate is `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<T: Scalar, F: Differentiable<T>>(
    f: &mut F,
    inputs: &[Tensor2D<T>],
    eps: T,
) -> Result<GradCheckReport<T>> {
    if !(eps >= T::lit(1e-7) && eps <= T::lit(1e-3)) {
        return Err(Error::Argument(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let analytic = f.gradient(inputs)?;
    if analytic.len() != inputs.len() {
        return Err(Error::Argument(format!(
            "gradient returned {} tensors for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    let mut work: Vec<Tensor2D<T>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: T::zero(),
        worst: (0, 0),
        coordinates: 0,
    };
    let two = T::lit(2.0);
    for (i, grad) in analytic.iter().enumerate() {
        if grad.shape() != inputs[i].shape() {
            return Err(Error::dim("grad_check", grad.shape(), inputs[i].shape()));
        }
        for k in 0..inputs[i].len() {
            let orig = inputs[i].as_slice()[k];
            work[i].as_mut_slice()[k] = orig + eps;
            let plus = f.value(&work)?;
            work[i].as_mut_slice()[k] = orig - eps;
            let minus = f.value(&work)?;
            work[i].as_mut_slice()[k] = orig;

            let numeric = (plus - minus) / (two * eps);
            let a = grad.as_slice()[k];
            if !plus.is_finite() || !minus.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite(format!(
                    "grad_check at input {i}, coordinate {k}: f+ = {plus}, f- = {minus}, analytic = {a}"
                )));
            }
            let denom = T::one().max(a.abs()).max(numeric.abs());
            let err = (a - numeric).abs() / denom;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, k);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

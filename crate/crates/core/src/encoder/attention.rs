//! Mean pooling and inner attention over a sentence's own biLSTM outputs.
//!
//! ```text
//! M     = tanh(W_y Y + (W_h R_ave) ⊗ e_L)
//! alpha = softmax(wᵀ M)        (over real tokens only)
//! R_att = Y alphaᵀ
//! ```

use crate::error::{Error, Result};
use crate::param::{Parameter, Parameterized};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{masked_softmax, Tensor2D};

use super::lstm::WEIGHT_INIT_SCALE;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerAttentionParams<T> {
    /// `2d × 2d`, applied to every column of `Y`.
    pub w_y: Parameter<T>,
    /// `2d × 2d`, applied to `R_ave`.
    pub w_h: Parameter<T>,
    /// `2d × 1` scoring vector.
    pub w: Parameter<T>,
}

impl<T: Scalar> InnerAttentionParams<T> {
    pub fn new(width: usize, rng: &mut Rng) -> Self {
        InnerAttentionParams {
            w_y: Parameter::uniform("encoder.attn.w_y", width, width, WEIGHT_INIT_SCALE, rng),
            w_h: Parameter::uniform("encoder.attn.w_h", width, width, WEIGHT_INIT_SCALE, rng),
            w: Parameter::uniform("encoder.attn.w", width, 1, WEIGHT_INIT_SCALE, rng),
        }
    }

    pub fn zeros(width: usize) -> Self {
        InnerAttentionParams {
            w_y: Parameter::zeros("encoder.attn.w_y", width, width),
            w_h: Parameter::zeros("encoder.attn.w_h", width, width),
            w: Parameter::zeros("encoder.attn.w", width, 1),
        }
    }

    pub fn width(&self) -> usize {
        self.w.value.rows()
    }
}

impl<T: Scalar> Parameterized<T> for InnerAttentionParams<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.w_y, &self.w_h, &self.w]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.w_y, &mut self.w_h, &mut self.w]
    }
}

fn real_count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

/// Mean of the unmasked columns of `y`.
pub fn mean_pool<T: Scalar>(y: &Tensor2D<T>, mask: &[bool]) -> Result<Vec<T>> {
    if mask.len() != y.cols() {
        return Err(Error::dim("mean_pool mask", y.shape(), (1, mask.len())));
    }
    let n = real_count(mask);
    if n == 0 {
        return Err(Error::Argument("mean_pool over a fully masked sentence".into()));
    }
    let mut out = vec![T::zero(); y.rows()];
    for (r, o) in out.iter_mut().enumerate() {
        *o = y.row(r).iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).sum();
    }
    let n = T::from_usize(n).expect("count fits the scalar type");
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Gradient of [`mean_pool`] with respect to `y`.
pub fn mean_pool_backward<T: Scalar>(d_r_ave: &[T], mask: &[bool]) -> Result<Tensor2D<T>> {
    let n = real_count(mask);
    if n == 0 {
        return Err(Error::Argument("mean_pool over a fully masked sentence".into()));
    }
    let inv = T::one() / T::from_usize(n).expect("count fits the scalar type");
    let mut dy = Tensor2D::zeros(d_r_ave.len(), mask.len());
    for (t, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (r, &g) in d_r_ave.iter().enumerate() {
            dy.set(r, t, g * inv);
        }
    }
    Ok(dy)
}

/// Intermediate values kept for [`inner_attention_backward`].
#[derive(Clone, Debug)]
pub struct AttentionTrace<T> {
    /// `2d × L`
    pub m: Tensor2D<T>,
    pub alpha: Vec<T>,
}

/// Returns `(R_att, alpha)`.
pub fn inner_attention<T: Scalar>(
    y: &Tensor2D<T>,
    r_ave: &[T],
    p: &InnerAttentionParams<T>,
    mask: &[bool],
) -> Result<(Vec<T>, Vec<T>)> {
    let (r_att, trace) = inner_attention_traced(y, r_ave, p, mask)?;
    Ok((r_att, trace.alpha))
}

pub fn inner_attention_traced<T: Scalar>(
    y: &Tensor2D<T>,
    r_ave: &[T],
    p: &InnerAttentionParams<T>,
    mask: &[bool],
) -> Result<(Vec<T>, AttentionTrace<T>)> {
    let width = p.width();
    if y.rows() != width || r_ave.len() != width {
        return Err(Error::dim("inner_attention", y.shape(), (width, r_ave.len())));
    }
    if mask.len() != y.cols() {
        return Err(Error::dim("inner_attention mask", y.shape(), (1, mask.len())));
    }
    // W_h R_ave once, broadcast onto every column of W_y Y.
    let summary = p.w_h.value.matvec(r_ave)?;
    let mut m = p.w_y.value.matmul(y)?;
    for (r, &s) in summary.iter().enumerate() {
        for v in m.row_mut(r) {
            *v = (*v + s).tanh();
        }
    }
    let scores = m.matvec_t(p.w.value.as_slice())?;
    let alpha = masked_softmax(&scores, mask)?;
    let r_att = y.matvec(&alpha)?;
    Ok((r_att, AttentionTrace { m, alpha }))
}

/// Backward of [`inner_attention`]; accumulates into `p`'s grads.
///
/// Returns `(dY, dR_ave)` where `dY` covers only the direct path through attention.
pub fn inner_attention_backward<T: Scalar>(
    p: &mut InnerAttentionParams<T>,
    y: &Tensor2D<T>,
    r_ave: &[T],
    mask: &[bool],
    trace: &AttentionTrace<T>,
    d_r_att: &[T],
) -> Result<(Tensor2D<T>, Vec<T>)> {
    let (width, len) = y.shape();
    if d_r_att.len() != width {
        return Err(Error::dim("inner_attention_backward", (width, len), (d_r_att.len(), 1)));
    }
    let alpha = &trace.alpha;
    // R_att = Y alpha
    let mut dy = Tensor2D::zeros(width, len);
    dy.add_outer(d_r_att, alpha)?;
    let d_alpha = y.matvec_t(d_r_att)?;
    // softmax Jacobian over the real positions; masked entries have alpha = 0.
    let inner: T = alpha.iter().zip(&d_alpha).map(|(&a, &g)| a * g).sum();
    let d_scores: Vec<T> = (0..len)
        .map(|t| if mask[t] { alpha[t] * (d_alpha[t] - inner) } else { T::zero() })
        .collect();
    // scores = wᵀ M
    let w = p.w.value.as_slice().to_vec();
    let dw = trace.m.matvec(&d_scores)?;
    for (g, v) in p.w.grad.as_mut_slice().iter_mut().zip(dw) {
        *g += v;
    }
    // pre-activation gradient
    let mut d_pre = Tensor2D::zeros(width, len);
    for r in 0..width {
        for t in 0..len {
            let mv = trace.m.get(r, t);
            d_pre.set(r, t, w[r] * d_scores[t] * (T::one() - mv * mv));
        }
    }
    p.w_y.grad.add_assign(&d_pre.matmul_nt(y)?)?;
    dy.add_assign(&p.w_y.value.matmul_tn(&d_pre)?)?;
    let d_summary: Vec<T> = (0..width).map(|r| d_pre.row(r).iter().copied().sum()).collect();
    p.w_h.grad.add_outer(&d_summary, r_ave)?;
    let d_r_ave = p.w_h.value.matvec_t(&d_summary)?;
    Ok((dy, d_r_ave))
}

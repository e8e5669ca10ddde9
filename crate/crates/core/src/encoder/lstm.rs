//! LSTM cell and the bidirectional sequence encoder.
//!
//! Gates are stacked row-wise in the order input, forget, output, candidate.

use crate::error::{Error, Result};
use crate::param::{Parameter, Parameterized};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{dot, sigmoid, Tensor2D};

pub const WEIGHT_INIT_SCALE: f64 = 0.08;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// One direction's LSTM weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    /// `4d × e`
    pub w_x: Parameter<T>,
    /// `4d × d`
    pub w_h: Parameter<T>,
    /// `4d × 1`
    pub b: Parameter<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn new(prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = LstmParams {
            w_x: Parameter::uniform(format!("{prefix}.w_x"), 4 * hidden, input, WEIGHT_INIT_SCALE, rng),
            w_h: Parameter::uniform(format!("{prefix}.w_h"), 4 * hidden, hidden, WEIGHT_INIT_SCALE, rng),
            b: Parameter::zeros(format!("{prefix}.b"), 4 * hidden, 1),
        };
        for r in hidden..2 * hidden {
            p.b.value.set(r, 0, T::lit(FORGET_BIAS_INIT));
        }
        p
    }

    pub fn zeros(prefix: &str, input: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Parameter::zeros(format!("{prefix}.w_x"), 4 * hidden, input),
            w_h: Parameter::zeros(format!("{prefix}.w_h"), 4 * hidden, hidden),
            b: Parameter::zeros(format!("{prefix}.b"), 4 * hidden, 1),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_x.value.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.value.cols()
    }
}

impl<T: Scalar> Parameterized<T> for LstmParams<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.w_x, &self.w_h, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct StepCache<T> {
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates `[i, f, o, g]`, length `4d`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

/// Gradients of one step with respect to its inputs.
#[derive(Clone, Debug)]
pub struct StepGrads<T> {
    pub dx: Vec<T>,
    pub dh_prev: Vec<T>,
    pub dc_prev: Vec<T>,
}

/// Finishes a step given the input pre-activation `W_x x + b`.
fn step_from_input_preact<T: Scalar>(
    p: &LstmParams<T>,
    zx: &[T],
    h_prev: &[T],
    c_prev: &[T],
) -> StepCache<T> {
    let d = p.hidden_size();
    let w_h = &p.w_h.value;
    let mut gates = Vec::with_capacity(4 * d);
    for (r, &z0) in zx.iter().enumerate() {
        let z = z0 + dot(w_h.row(r), h_prev);
        gates.push(if r < 3 * d { sigmoid(z) } else { z.tanh() });
    }
    let (i, rest) = gates.split_at(d);
    let (f, rest) = rest.split_at(d);
    let (o, g) = rest.split_at(d);
    let c: Vec<T> = (0..d).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<T> = c.iter().map(|x| x.tanh()).collect();
    let h: Vec<T> = (0..d).map(|k| o[k] * tanh_c[k]).collect();
    StepCache {
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Pre-activation gradient `∂/∂z` for the stacked gates, plus `∂/∂c_prev`.
fn gate_backward<T: Scalar>(cache: &StepCache<T>, dh: &[T], dc: &[T]) -> (Vec<T>, Vec<T>) {
    let d = cache.h.len();
    let g = &cache.gates;
    let mut dz = vec![T::zero(); 4 * d];
    let mut dc_prev = vec![T::zero(); d];
    let one = T::one();
    for k in 0..d {
        let (i, f, o, cand) = (g[k], g[d + k], g[2 * d + k], g[3 * d + k]);
        let tc = cache.tanh_c[k];
        let dct = dc[k] + dh[k] * o * (one - tc * tc);
        dz[k] = dct * cand * i * (one - i);
        dz[d + k] = dct * cache.c_prev[k] * f * (one - f);
        dz[2 * d + k] = dh[k] * tc * o * (one - o);
        dz[3 * d + k] = dct * i * (one - cand * cand);
        dc_prev[k] = dct * f;
    }
    (dz, dc_prev)
}

fn check_len(op: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::dim(op, (got, 1), (want, 1)));
    }
    Ok(())
}

/// Single LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell_step<T: Scalar>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    p: &LstmParams<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let cache = lstm_cell_step_cached(x, h_prev, c_prev, p)?;
    Ok((cache.h, cache.c))
}

pub fn lstm_cell_step_cached<T: Scalar>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    p: &LstmParams<T>,
) -> Result<StepCache<T>> {
    let d = p.hidden_size();
    check_len("lstm_cell_step x", x.len(), p.input_size())?;
    check_len("lstm_cell_step h_prev", h_prev.len(), d)?;
    check_len("lstm_cell_step c_prev", c_prev.len(), d)?;
    let mut zx = p.w_x.value.matvec(x)?;
    for (z, &b) in zx.iter_mut().zip(p.b.value.as_slice()) {
        *z += b;
    }
    Ok(step_from_input_preact(p, &zx, h_prev, c_prev))
}

/// Backward through one step given upstream `dh`, `dc`; accumulates into `p`'s grads.
pub fn lstm_cell_step_backward<T: Scalar>(
    p: &mut LstmParams<T>,
    x: &[T],
    cache: &StepCache<T>,
    dh: &[T],
    dc: &[T],
) -> Result<StepGrads<T>> {
    let (dz, dc_prev) = gate_backward(cache, dh, dc);
    p.w_x.grad.add_outer(&dz, x)?;
    p.w_h.grad.add_outer(&dz, &cache.h_prev)?;
    for (g, &v) in p.b.grad.as_mut_slice().iter_mut().zip(&dz) {
        *g += v;
    }
    Ok(StepGrads {
        dx: p.w_x.value.matvec_t(&dz)?,
        dh_prev: p.w_h.value.matvec_t(&dz)?,
        dc_prev,
    })
}

/// Forward and backward LSTMs whose outputs are concatenated per token.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmEncoder<T> {
    pub forward: LstmParams<T>,
    pub backward: LstmParams<T>,
}

impl<T: Scalar> BiLstmEncoder<T> {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        BiLstmEncoder {
            forward: LstmParams::new("encoder.lstm_fwd", input, hidden, rng),
            backward: LstmParams::new("encoder.lstm_bwd", input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmEncoder {
            forward: LstmParams::zeros("encoder.lstm_fwd", input, hidden),
            backward: LstmParams::zeros("encoder.lstm_bwd", input, hidden),
        }
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    /// Width of each output column, `2d`.
    pub fn output_size(&self) -> usize {
        2 * self.hidden_size()
    }
}

impl<T: Scalar> Parameterized<T> for BiLstmEncoder<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.forward.params();
        v.extend(self.backward.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.forward.params_mut();
        v.extend(self.backward.params_mut());
        v
    }
}

/// Saved state of a biLSTM forward pass over one sentence.
#[derive(Clone, Debug)]
pub struct BiLstmTrace<T> {
    /// Column index in `Y` of each real token, ascending.
    pub positions: Vec<usize>,
    /// Real tokens as rows, `n × e`.
    pub x_rows: Tensor2D<T>,
    /// Forward-direction step for real token `k`.
    pub fwd: Vec<StepCache<T>>,
    /// Backward-direction step for real token `k`.
    pub bwd: Vec<StepCache<T>>,
    pub len: usize,
}

fn run_direction<T: Scalar>(
    p: &LstmParams<T>,
    x_rows: &Tensor2D<T>,
    reverse: bool,
) -> Result<Vec<StepCache<T>>> {
    let n = x_rows.rows();
    let d = p.hidden_size();
    // n × 4d, row k = W_x x_k
    let mut zx = x_rows.matmul_nt(&p.w_x.value)?;
    let b = p.b.value.as_slice();
    for k in 0..n {
        for (z, &bv) in zx.row_mut(k).iter_mut().zip(b) {
            *z += bv;
        }
    }
    let mut caches: Vec<Option<StepCache<T>>> = vec![None; n];
    let mut h = vec![T::zero(); d];
    let mut c = vec![T::zero(); d];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for k in order {
        let step = step_from_input_preact(p, zx.row(k), &h, &c);
        h.clone_from(&step.h);
        c.clone_from(&step.c);
        caches[k] = Some(step);
    }
    Ok(caches.into_iter().map(|s| s.expect("every step visited")).collect())
}

/// Runs both directions over the real tokens given as rows of `x_rows`.
///
/// `positions[k]` is the output column for real token `k`; other columns of the
/// `2d × len` result are zero.
pub(crate) fn bilstm_forward_rows<T: Scalar>(
    enc: &BiLstmEncoder<T>,
    x_rows: Tensor2D<T>,
    positions: Vec<usize>,
    len: usize,
) -> Result<(Tensor2D<T>, BiLstmTrace<T>)> {
    if x_rows.cols() != enc.input_size() {
        return Err(Error::dim("bilstm_forward", x_rows.shape(), (x_rows.rows(), enc.input_size())));
    }
    let d = enc.hidden_size();
    let fwd = run_direction(&enc.forward, &x_rows, false)?;
    let bwd = run_direction(&enc.backward, &x_rows, true)?;
    let mut y = Tensor2D::zeros(2 * d, len);
    for (k, &pos) in positions.iter().enumerate() {
        for r in 0..d {
            y.set(r, pos, fwd[k].h[r]);
            y.set(d + r, pos, bwd[k].h[r]);
        }
    }
    Ok((
        y,
        BiLstmTrace {
            positions,
            x_rows,
            fwd,
            bwd,
            len,
        },
    ))
}

/// biLSTM over an embedded sentence `x` (`e × L`, one column per token).
///
/// Masked-out columns are skipped by both directions and come back as zero columns.
pub fn bilstm_forward<T: Scalar>(
    enc: &BiLstmEncoder<T>,
    x: &Tensor2D<T>,
    mask: &[bool],
) -> Result<Tensor2D<T>> {
    bilstm_forward_traced(enc, x, mask).map(|(y, _)| y)
}

pub fn bilstm_forward_traced<T: Scalar>(
    enc: &BiLstmEncoder<T>,
    x: &Tensor2D<T>,
    mask: &[bool],
) -> Result<(Tensor2D<T>, BiLstmTrace<T>)> {
    if mask.len() != x.cols() {
        return Err(Error::dim("bilstm_forward mask", x.shape(), (1, mask.len())));
    }
    let positions: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
    if positions.is_empty() {
        return Err(Error::Argument("bilstm_forward on an empty sentence".into()));
    }
    let e = x.rows();
    let mut rows = Vec::with_capacity(positions.len() * e);
    for &t in &positions {
        rows.extend(x.col(t));
    }
    let x_rows = Tensor2D::from_vec(positions.len(), e, rows)?;
    bilstm_forward_rows(enc, x_rows, positions, x.cols())
}

fn direction_backward<T: Scalar>(
    p: &mut LstmParams<T>,
    x_rows: &Tensor2D<T>,
    caches: &[StepCache<T>],
    dh_out: &[Vec<T>],
    reverse: bool,
    want_dx: bool,
) -> Result<Option<Tensor2D<T>>> {
    let n = caches.len();
    let d = p.hidden_size();
    let mut dz_rows = Tensor2D::zeros(n, 4 * d);
    let mut hprev_rows = Tensor2D::zeros(n, d);
    let mut dh_next = vec![T::zero(); d];
    let mut dc_next = vec![T::zero(); d];
    // Backprop visits steps in the opposite order of the forward run.
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new(0..n)
    } else {
        Box::new((0..n).rev())
    };
    for k in order {
        let dh: Vec<T> = dh_out[k].iter().zip(&dh_next).map(|(&a, &b)| a + b).collect();
        let (dz, dc_prev) = gate_backward(&caches[k], &dh, &dc_next);
        dh_next = p.w_h.value.matvec_t(&dz)?;
        dc_next = dc_prev;
        dz_rows.row_mut(k).copy_from_slice(&dz);
        hprev_rows.row_mut(k).copy_from_slice(&caches[k].h_prev);
    }
    p.w_x.grad.add_assign(&dz_rows.matmul_tn(x_rows)?)?;
    p.w_h.grad.add_assign(&dz_rows.matmul_tn(&hprev_rows)?)?;
    let bg = p.b.grad.as_mut_slice();
    for k in 0..n {
        for (g, &v) in bg.iter_mut().zip(dz_rows.row(k)) {
            *g += v;
        }
    }
    if want_dx {
        Ok(Some(dz_rows.matmul(&p.w_x.value)?))
    } else {
        Ok(None)
    }
}

/// Backward through the biLSTM given `dY` (`2d × L`); accumulates parameter grads.
///
/// Returns `dX` (`e × L`, zero on masked columns) when `want_dx` is set.
pub fn bilstm_backward<T: Scalar>(
    enc: &mut BiLstmEncoder<T>,
    trace: &BiLstmTrace<T>,
    dy: &Tensor2D<T>,
    want_dx: bool,
) -> Result<Option<Tensor2D<T>>> {
    let d = enc.hidden_size();
    if dy.shape() != (2 * d, trace.len) {
        return Err(Error::dim("bilstm_backward", dy.shape(), (2 * d, trace.len)));
    }
    let fwd_dh: Vec<Vec<T>> = trace.positions.iter().map(|&t| (0..d).map(|r| dy.get(r, t)).collect()).collect();
    let bwd_dh: Vec<Vec<T>> =
        trace.positions.iter().map(|&t| (d..2 * d).map(|r| dy.get(r, t)).collect()).collect();
    let dx_f = direction_backward(&mut enc.forward, &trace.x_rows, &trace.fwd, &fwd_dh, false, want_dx)?;
    let dx_b = direction_backward(&mut enc.backward, &trace.x_rows, &trace.bwd, &bwd_dh, true, want_dx)?;
    match (dx_f, dx_b) {
        (Some(a), Some(b)) => {
            let rows = a.add(&b)?;
            let mut dx = Tensor2D::zeros(enc.input_size(), trace.len);
            for (k, &t) in trace.positions.iter().enumerate() {
                dx.set_col(t, rows.row(k));
            }
            Ok(Some(dx))
        }
        _ => Ok(None),
    }
}

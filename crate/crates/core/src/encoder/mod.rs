//! Sentence encoder: embeddings → biLSTM → mean pooling → inner attention.

mod attention;
mod lstm;

pub use attention::{
    inner_attention, inner_attention_backward, inner_attention_traced, mean_pool, mean_pool_backward,
    AttentionTrace, InnerAttentionParams,
};
pub use lstm::{
    bilstm_backward, bilstm_forward, bilstm_forward_traced, lstm_cell_step, lstm_cell_step_backward,
    lstm_cell_step_cached, BiLstmEncoder, BiLstmTrace, LstmParams, StepCache, StepGrads, FORGET_BIAS_INIT,
    WEIGHT_INIT_SCALE,
};

use crate::error::{Error, Result};
use crate::param::{Parameter, Parameterized};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

/// Shared sentence encoder. The same instance encodes premise and hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEncoder<T> {
    pub bilstm: BiLstmEncoder<T>,
    /// `None` is the mean-pooling-only basic model.
    pub attention: Option<InnerAttentionParams<T>>,
}

impl<T: Scalar> SentenceEncoder<T> {
    pub fn new(input: usize, hidden: usize, attention: bool, rng: &mut Rng) -> Self {
        let bilstm = BiLstmEncoder::new(input, hidden, rng);
        let attention = attention.then(|| InnerAttentionParams::new(2 * hidden, rng));
        SentenceEncoder { bilstm, attention }
    }

    /// Width of the sentence representation, `2d`.
    pub fn output_size(&self) -> usize {
        self.bilstm.output_size()
    }
}

impl<T: Scalar> Parameterized<T> for SentenceEncoder<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.bilstm.params();
        if let Some(a) = &self.attention {
            v.extend(a.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.bilstm.params_mut();
        if let Some(a) = &mut self.attention {
            v.extend(a.params_mut());
        }
        v
    }
}

/// One encoded sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSentence<T> {
    /// `2d × L`, one column per position, zero on padding.
    pub y: Tensor2D<T>,
    pub r_ave: Vec<T>,
    /// Attention weights; `None` for the basic model.
    pub alpha: Option<Vec<T>>,
    pub r_att: Option<Vec<T>>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> EncodedSentence<T> {
    /// The vector handed to matching: `R_att` when attention is on, else `R_ave`.
    pub fn representation(&self) -> &[T] {
        self.r_att.as_deref().unwrap_or(&self.r_ave)
    }
}

/// Forward state needed by [`encoder_backward`].
#[derive(Clone, Debug)]
pub struct EncoderTrace<T> {
    pub encoded: EncodedSentence<T>,
    bilstm: Option<BiLstmTrace<T>>,
    attention: Option<AttentionTrace<T>>,
}

/// Pooling and attention over precomputed per-token features `y`.
///
/// This is the encoder with the biLSTM swapped for an arbitrary token map.
pub fn encode_features<T: Scalar>(
    y: Tensor2D<T>,
    mask: &[bool],
    attention: Option<&InnerAttentionParams<T>>,
) -> Result<EncoderTrace<T>> {
    let r_ave = mean_pool(&y, mask)?;
    let (r_att, alpha, trace) = match attention {
        Some(p) => {
            let (r_att, trace) = inner_attention_traced(&y, &r_ave, p, mask)?;
            (Some(r_att), Some(trace.alpha.clone()), Some(trace))
        }
        None => (None, None, None),
    };
    Ok(EncoderTrace {
        encoded: EncodedSentence {
            y,
            r_ave,
            alpha,
            r_att,
            mask: mask.to_vec(),
        },
        bilstm: None,
        attention: trace,
    })
}

/// Encodes token indices (with `mask` marking real tokens) against a `V × e` embedding table.
pub fn encode_sentence<T: Scalar>(
    tokens: &[usize],
    mask: &[bool],
    embeddings: &Tensor2D<T>,
    encoder: &SentenceEncoder<T>,
) -> Result<EncodedSentence<T>> {
    encode_sentence_traced(tokens, mask, embeddings, encoder).map(|t| t.encoded)
}

pub fn encode_sentence_traced<T: Scalar>(
    tokens: &[usize],
    mask: &[bool],
    embeddings: &Tensor2D<T>,
    encoder: &SentenceEncoder<T>,
) -> Result<EncoderTrace<T>> {
    if tokens.len() != mask.len() {
        return Err(Error::dim("encode_sentence mask", (tokens.len(), 1), (mask.len(), 1)));
    }
    if embeddings.cols() != encoder.bilstm.input_size() {
        return Err(Error::dim(
            "encode_sentence embeddings",
            embeddings.shape(),
            (embeddings.rows(), encoder.bilstm.input_size()),
        ));
    }
    let vocab = embeddings.rows();
    let mut positions = Vec::with_capacity(tokens.len());
    let mut rows = Vec::with_capacity(tokens.len() * embeddings.cols());
    for (pos, (&tok, &real)) in tokens.iter().zip(mask).enumerate() {
        if !real {
            continue;
        }
        if tok >= vocab {
            return Err(Error::Data(format!(
                "token index {tok} at position {pos} out of range for vocabulary of {vocab}"
            )));
        }
        positions.push(pos);
        rows.extend_from_slice(embeddings.row(tok));
    }
    if positions.is_empty() {
        return Err(Error::Argument("cannot encode an empty sentence".into()));
    }
    let x_rows = Tensor2D::from_vec(positions.len(), embeddings.cols(), rows)?;
    let (y, bl_trace) = lstm::bilstm_forward_rows(&encoder.bilstm, x_rows, positions, tokens.len())?;
    let mut trace = encode_features(y, mask, encoder.attention.as_ref())?;
    trace.bilstm = Some(bl_trace);
    Ok(trace)
}

/// Backpropagates `d_repr` (gradient of the representation) into the encoder's grads.
///
/// Returns `dY`, the gradient reaching the biLSTM outputs.
pub fn encoder_backward<T: Scalar>(
    encoder: &mut SentenceEncoder<T>,
    trace: &EncoderTrace<T>,
    d_repr: &[T],
) -> Result<Tensor2D<T>> {
    let enc = &trace.encoded;
    let mut dy;
    let d_r_ave;
    match (&mut encoder.attention, &trace.attention) {
        (Some(p), Some(at)) => {
            let (dy_att, d_ave) = inner_attention_backward(p, &enc.y, &enc.r_ave, &enc.mask, at, d_repr)?;
            dy = dy_att;
            d_r_ave = d_ave;
        }
        (None, None) => {
            dy = Tensor2D::zeros(enc.y.rows(), enc.y.cols());
            d_r_ave = d_repr.to_vec();
        }
        _ => return Err(Error::Argument("encoder trace does not match encoder configuration".into())),
    }
    dy.add_assign(&mean_pool_backward(&d_r_ave, &enc.mask)?)?;
    if let Some(bl) = &trace.bilstm {
        bilstm_backward(&mut encoder.bilstm, bl, &dy, false)?;
    }
    Ok(dy)
}

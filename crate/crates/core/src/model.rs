//! The Siamese entailment model: one shared encoder, a matching head, cross-entropy.

use serde::{Deserialize, Serialize};

use crate::data::{Batch, Vocab};
use crate::encoder::{encode_sentence_traced, encoder_backward, EncodedSentence, EncoderTrace, SentenceEncoder};
use crate::error::{Error, Result};
use crate::matcher::{
    classify_backward, classify_traced, match_vectors, match_vectors_backward, ClassifyTrace, Label, MatchHead,
    NUM_CLASSES,
};
use crate::param::{Parameter, Parameterized};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{log_sum_exp, softmax, Tensor2D};

pub const DEFAULT_DROPOUT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    /// LSTM hidden size per direction.
    pub hidden: usize,
    /// Width of the tanh projection before the classifier.
    pub projection: usize,
    pub attention: bool,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 300,
            hidden: 300,
            projection: 300,
            attention: true,
            dropout: DEFAULT_DROPOUT,
            seed: 2016,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden == 0 || self.projection == 0 {
            return Err(Error::Argument(format!("model sizes must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count for this configuration.
    pub fn trainable_parameters(&self) -> usize {
        let (e, d, m) = (self.embedding_dim, self.hidden, self.projection);
        let lstm = 2 * (4 * d * e + 4 * d * d + 4 * d);
        let attention = if self.attention { 2 * (2 * d) * (2 * d) + 2 * d } else { 0 };
        let head = m * 8 * d + m + NUM_CLASSES * m + NUM_CLASSES;
        lstm + attention + head
    }
}

/// Trainable and frozen parameter counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    pub components: Vec<(String, usize)>,
    pub trainable: usize,
    /// Frozen embedding table.
    pub frozen: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiameseModel<T> {
    pub config: ModelConfig,
    pub vocab: Vocab<T>,
    pub encoder: SentenceEncoder<T>,
    pub head: MatchHead<T>,
}

impl<T: Scalar> Parameterized<T> for SiameseModel<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.encoder.params();
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

/// Forward state for one pair.
#[derive(Clone, Debug)]
pub struct PairTrace<T> {
    pub premise: EncoderTrace<T>,
    pub hypothesis: EncoderTrace<T>,
    pub classify: ClassifyTrace<T>,
}

impl<T: Scalar> PairTrace<T> {
    pub fn probs(&self) -> &[T] {
        &self.classify.probs
    }

    pub fn logits(&self) -> &[T] {
        &self.classify.logits
    }

    pub fn prediction(&self) -> Label {
        Label::from_index(argmax(&self.classify.probs)).expect("three classes")
    }
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> SiameseModel<T> {
    /// Fresh model; weights drawn from `config.seed`.
    pub fn new(config: ModelConfig, vocab: Vocab<T>) -> Result<Self> {
        config.validate()?;
        if vocab.dim() != config.embedding_dim {
            return Err(Error::Argument(format!(
                "embedding table is {}-dimensional but config says {}",
                vocab.dim(),
                config.embedding_dim
            )));
        }
        let mut rng = Rng::new(config.seed);
        let encoder = SentenceEncoder::new(config.embedding_dim, config.hidden, config.attention, &mut rng);
        let head = MatchHead::new(8 * config.hidden, config.projection, &mut rng);
        Ok(SiameseModel {
            config,
            vocab,
            encoder,
            head,
        })
    }

    pub fn count_parameters(&self) -> ParamCounts {
        let components: Vec<(String, usize)> = self.params().iter().map(|p| (p.name().to_string(), p.len())).collect();
        let trainable = components.iter().map(|c| c.1).sum();
        let frozen = self.vocab.embeddings().len();
        ParamCounts {
            components,
            trainable,
            frozen,
            total: trainable + frozen,
        }
    }

    pub fn encode(&self, tokens: &[usize], mask: &[bool]) -> Result<EncodedSentence<T>> {
        encode_sentence_traced(tokens, mask, self.vocab.embeddings(), &self.encoder).map(|t| t.encoded)
    }

    /// Encodes both sentences with the shared encoder and classifies the pair.
    pub fn forward_pair(
        &self,
        premise: (&[usize], &[bool]),
        hypothesis: (&[usize], &[bool]),
        dropout: Option<&mut Rng>,
    ) -> Result<PairTrace<T>> {
        let emb = self.vocab.embeddings();
        let p = encode_sentence_traced(premise.0, premise.1, emb, &self.encoder)?;
        let h = encode_sentence_traced(hypothesis.0, hypothesis.1, emb, &self.encoder)?;
        let relation = match_vectors(p.encoded.representation(), h.encoded.representation())?;
        let classify = classify_traced(&relation, &self.head, dropout.map(|r| (self.config.dropout, r)))?;
        Ok(PairTrace {
            premise: p,
            hypothesis: h,
            classify,
        })
    }

    /// Accumulates gradients of a pair given `d loss / d logits`.
    pub fn backward_pair(&mut self, trace: &PairTrace<T>, d_logits: &[T]) -> Result<()> {
        let d_rel = classify_backward(&mut self.head, &trace.classify, d_logits)?;
        let (dp, dh) = match_vectors_backward(
            trace.premise.encoded.representation(),
            trace.hypothesis.encoded.representation(),
            &d_rel,
        );
        encoder_backward(&mut self.encoder, &trace.premise, &dp)?;
        encoder_backward(&mut self.encoder, &trace.hypothesis, &dh)?;
        Ok(())
    }

    pub fn forward_batch_traced(&self, batch: &Batch, mut dropout: Option<&mut Rng>) -> Result<Vec<PairTrace<T>>> {
        (0..batch.len())
            .map(|b| {
                let pm = batch.premise.mask(b);
                let hm = batch.hypothesis.mask(b);
                self.forward_pair(
                    (batch.premise.row(b), &pm),
                    (batch.hypothesis.row(b), &hm),
                    dropout.as_deref_mut(),
                )
                .map_err(|e| Error::Data(format!("batch example {b}: {e}")))
            })
            .collect()
    }

    /// Class probabilities, `B × 3`. Pass an rng to run in training mode (dropout on).
    pub fn forward(&self, batch: &Batch, dropout: Option<&mut Rng>) -> Result<Tensor2D<T>> {
        let traces = self.forward_batch_traced(batch, dropout)?;
        let rows: Vec<Vec<T>> = traces.iter().map(|t| t.probs().to_vec()).collect();
        Tensor2D::from_rows(&rows)
    }

    /// Classifier input (relation vector) for every pair of a batch, inference mode.
    pub fn relation_vectors(&self, batch: &Batch) -> Result<Vec<Vec<T>>> {
        Ok(self.forward_batch_traced(batch, None)?.into_iter().map(|t| t.classify.relation).collect())
    }

    /// Mean cross-entropy over the batch; gradients are accumulated into the parameters.
    ///
    /// Returns `(loss, correct predictions)`.
    pub fn loss_and_backward(&mut self, batch: &Batch, dropout: Option<&mut Rng>) -> Result<(T, usize)> {
        let traces = self.forward_batch_traced(batch, dropout)?;
        let logits = Tensor2D::from_rows(&traces.iter().map(|t| t.logits().to_vec()).collect::<Vec<_>>())?;
        let loss = cross_entropy(&logits, &batch.labels)?;
        let d_logits = cross_entropy_backward(&logits, &batch.labels)?;
        let mut correct = 0;
        for (b, trace) in traces.iter().enumerate() {
            if trace.prediction() == batch.labels[b] {
                correct += 1;
            }
            self.backward_pair(trace, d_logits.row(b))?;
        }
        Ok((loss, correct))
    }
}

fn check_labels<T: Scalar>(logits: &Tensor2D<T>, labels: &[Label]) -> Result<()> {
    if logits.cols() != NUM_CLASSES || logits.rows() != labels.len() {
        return Err(Error::dim("cross_entropy", logits.shape(), (labels.len(), NUM_CLASSES)));
    }
    Ok(())
}

/// `−(1/B) Σ log softmax(logits_b)[y_b]`, evaluated as `logsumexp − logit`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor2D<T>, labels: &[Label]) -> Result<T> {
    check_labels(logits, labels)?;
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(b, y)| log_sum_exp(logits.row(b)) - logits.get(b, y.index()))
        .sum();
    Ok(total / T::from_usize(labels.len()).expect("batch size fits the scalar type"))
}

/// `(softmax − onehot) / B`.
pub fn cross_entropy_backward<T: Scalar>(logits: &Tensor2D<T>, labels: &[Label]) -> Result<Tensor2D<T>> {
    check_labels(logits, labels)?;
    let inv_b = T::one() / T::from_usize(labels.len()).expect("batch size fits the scalar type");
    let mut out = Tensor2D::zeros(logits.rows(), logits.cols());
    for (b, y) in labels.iter().enumerate() {
        let mut p = softmax(logits.row(b))?;
        p[y.index()] -= T::one();
        for (o, v) in out.row_mut(b).iter_mut().zip(p) {
            *o = v * inv_b;
        }
    }
    Ok(out)
}

//! Relation vector and the 3-way entailment classifier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{Parameter, Parameterized};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{softmax, Tensor2D};

pub const NUM_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment = 0,
    Contradiction = 1,
    Neutral = 2,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Entailment, Label::Contradiction, Label::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entailment" => Ok(Label::Entailment),
            "contradiction" => Ok(Label::Contradiction),
            "neutral" => Ok(Label::Neutral),
            other => Err(Error::Data(format!("unknown label {other:?}"))),
        }
    }
}

/// `[r_p ; r_h ; r_p ∘ r_h ; r_p − r_h]`
pub fn match_vectors<T: Scalar>(r_p: &[T], r_h: &[T]) -> Result<Vec<T>> {
    if r_p.len() != r_h.len() {
        return Err(Error::dim("match_vectors", (r_p.len(), 1), (r_h.len(), 1)));
    }
    let mut out = Vec::with_capacity(4 * r_p.len());
    out.extend_from_slice(r_p);
    out.extend_from_slice(r_h);
    out.extend(r_p.iter().zip(r_h).map(|(&a, &b)| a * b));
    out.extend(r_p.iter().zip(r_h).map(|(&a, &b)| a - b));
    Ok(out)
}

/// Splits a relation-vector gradient back onto `(r_p, r_h)`.
pub fn match_vectors_backward<T: Scalar>(r_p: &[T], r_h: &[T], d_rel: &[T]) -> (Vec<T>, Vec<T>) {
    let n = r_p.len();
    let (d_cat_p, rest) = d_rel.split_at(n);
    let (d_cat_h, rest) = rest.split_at(n);
    let (d_prod, d_diff) = rest.split_at(n);
    let dp = (0..n).map(|k| d_cat_p[k] + d_prod[k] * r_h[k] + d_diff[k]).collect();
    let dh = (0..n).map(|k| d_cat_h[k] + d_prod[k] * r_p[k] - d_diff[k]).collect();
    (dp, dh)
}

/// tanh projection followed by a softmax classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchHead<T> {
    /// `m × 8d`
    pub w_proj: Parameter<T>,
    pub b_proj: Parameter<T>,
    /// `3 × m`
    pub w_cls: Parameter<T>,
    pub b_cls: Parameter<T>,
}

impl<T: Scalar> MatchHead<T> {
    pub fn new(relation: usize, projection: usize, rng: &mut Rng) -> Self {
        let scale = crate::encoder::WEIGHT_INIT_SCALE;
        MatchHead {
            w_proj: Parameter::uniform("head.w_proj", projection, relation, scale, rng),
            b_proj: Parameter::zeros("head.b_proj", projection, 1),
            w_cls: Parameter::uniform("head.w_cls", NUM_CLASSES, projection, scale, rng),
            b_cls: Parameter::zeros("head.b_cls", NUM_CLASSES, 1),
        }
    }

    pub fn zeros(relation: usize, projection: usize) -> Self {
        MatchHead {
            w_proj: Parameter::zeros("head.w_proj", projection, relation),
            b_proj: Parameter::zeros("head.b_proj", projection, 1),
            w_cls: Parameter::zeros("head.w_cls", NUM_CLASSES, projection),
            b_cls: Parameter::zeros("head.b_cls", NUM_CLASSES, 1),
        }
    }

    pub fn relation_size(&self) -> usize {
        self.w_proj.value.cols()
    }

    pub fn projection_size(&self) -> usize {
        self.w_proj.value.rows()
    }
}

impl<T: Scalar> Parameterized<T> for MatchHead<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.w_proj, &self.b_proj, &self.w_cls, &self.b_cls]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.w_proj, &mut self.b_proj, &mut self.w_cls, &mut self.b_cls]
    }
}

/// Inverted dropout. Returns the kept-and-rescaled values and the per-unit factors.
pub fn apply_dropout<T: Scalar>(values: &[T], rate: f64, rng: &mut Rng) -> (Vec<T>, Vec<T>) {
    if rate <= 0.0 {
        return (values.to_vec(), vec![T::one(); values.len()]);
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let factors: Vec<T> = values
        .iter()
        .map(|_| if rng.unit() >= rate { keep } else { T::zero() })
        .collect();
    let out = values.iter().zip(&factors).map(|(&v, &f)| v * f).collect();
    (out, factors)
}

#[derive(Clone, Debug)]
pub struct ClassifyTrace<T> {
    pub relation: Vec<T>,
    /// tanh output before dropout
    pub projection: Vec<T>,
    pub dropout: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

/// Class probabilities for a relation vector. `dropout` is `Some((rate, rng))` in training.
pub fn classify<T: Scalar>(relation: &[T], head: &MatchHead<T>, dropout: Option<(f64, &mut Rng)>) -> Result<Vec<T>> {
    classify_traced(relation, head, dropout).map(|t| t.probs)
}

pub fn classify_traced<T: Scalar>(
    relation: &[T],
    head: &MatchHead<T>,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<ClassifyTrace<T>> {
    let mut pre = head.w_proj.value.matvec(relation)?;
    for (v, &b) in pre.iter_mut().zip(head.b_proj.value.as_slice()) {
        *v = (*v + b).tanh();
    }
    let projection = pre;
    let (dropped, factors) = match dropout {
        Some((rate, rng)) => apply_dropout(&projection, rate, rng),
        None => (projection.clone(), vec![T::one(); projection.len()]),
    };
    let mut logits = head.w_cls.value.matvec(&dropped)?;
    for (v, &b) in logits.iter_mut().zip(head.b_cls.value.as_slice()) {
        *v += b;
    }
    let probs = softmax(&logits)?;
    Ok(ClassifyTrace {
        relation: relation.to_vec(),
        projection,
        dropout: factors,
        logits,
        probs,
    })
}

/// Backward from logit gradients; accumulates head grads and returns `d relation`.
pub fn classify_backward<T: Scalar>(head: &mut MatchHead<T>, trace: &ClassifyTrace<T>, d_logits: &[T]) -> Result<Vec<T>> {
    if d_logits.len() != NUM_CLASSES {
        return Err(Error::dim("classify_backward", (d_logits.len(), 1), (NUM_CLASSES, 1)));
    }
    let dropped: Vec<T> = trace.projection.iter().zip(&trace.dropout).map(|(&p, &f)| p * f).collect();
    head.w_cls.grad.add_outer(d_logits, &dropped)?;
    for (g, &v) in head.b_cls.grad.as_mut_slice().iter_mut().zip(d_logits) {
        *g += v;
    }
    let d_dropped = head.w_cls.value.matvec_t(d_logits)?;
    let d_pre: Vec<T> = d_dropped
        .iter()
        .zip(&trace.dropout)
        .zip(&trace.projection)
        .map(|((&g, &f), &p)| g * f * (T::one() - p * p))
        .collect();
    head.w_proj.grad.add_outer(&d_pre, &trace.relation)?;
    for (g, &v) in head.b_proj.grad.as_mut_slice().iter_mut().zip(&d_pre) {
        *g += v;
    }
    head.w_proj.value.matvec_t(&d_pre)
}

/// Convenience: classifier input as a column tensor.
pub fn relation_tensor<T: Scalar>(r_p: &[T], r_h: &[T]) -> Result<Tensor2D<T>> {
    Tensor2D::column(&match_vectors(r_p, r_h)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_index_order_is_fixed() {
        assert_eq!(Label::Entailment.index(), 0);
        assert_eq!(Label::Contradiction.index(), 1);
        assert_eq!(Label::Neutral.index(), 2);
        assert_eq!("neutral".parse::<Label>().unwrap(), Label::Neutral);
        assert!("-".parse::<Label>().is_err());
    }

    #[test]
    fn identical_inputs_zero_difference() {
        let r = [0.5, -1.0, 2.0];
        let v = match_vectors(&r, &r).unwrap();
        assert_eq!(&v[6..9], &[0.25, 1.0, 4.0]);
        assert_eq!(&v[9..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_premise() {
        let h = [1.0, -3.0];
        let v = match_vectors(&[0.0, 0.0], &h).unwrap();
        assert_eq!(&v[4..6], &[0.0, 0.0]);
        assert_eq!(&v[6..], &[-1.0, 3.0]);
    }

    #[test]
    fn matches_per_index_oracle() {
        let mut rng = Rng::new(5);
        let p: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let v = match_vectors(&p, &h).unwrap();
        for i in 0..4 {
            assert_eq!(v[i], p[i]);
            assert_eq!(v[4 + i], h[i]);
            assert_eq!(v[8 + i], p[i] * h[i]);
            assert_eq!(v[12 + i], p[i] - h[i]);
        }
        assert!(match_vectors(&p, &h[..3]).is_err());
    }

    #[test]
    fn zero_head_is_uniform() {
        let head = MatchHead::<f64>::zeros(8, 5);
        let p = classify(&[0.3; 8], &head, None).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn inference_is_deterministic_and_normalized() {
        let mut rng = Rng::new(6);
        let head = MatchHead::<f64>::new(8, 5, &mut rng);
        let rel: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let a = classify(&rel, &head, None).unwrap();
        let b = classify(&rel, &head, None).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let values: Vec<f64> = (0..6).map(|i| 0.1 + 0.15 * i as f64).collect();
        let trials = 10_000;
        let mut mean = vec![0.0; values.len()];
        for seed in 0..trials {
            let (out, _) = apply_dropout(&values, 0.25, &mut Rng::new(seed));
            for (m, o) in mean.iter_mut().zip(out) {
                *m += o / trials as f64;
            }
        }
        for (m, v) in mean.iter().zip(&values) {
            assert!((m - v).abs() / v < 0.02, "{m} vs {v}");
        }
    }
}

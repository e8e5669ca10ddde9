//! Training loop and evaluation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{batches_from_indexed, index_examples, InputStrategy, NliExample};
use crate::error::{Error, Result};
use crate::matcher::{Label, NUM_CLASSES};
use crate::model::SiameseModel;
use crate::optim::{clip_grad_norm, RmspropConfig, RmspropState};
use crate::param::Parameterized;
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmspropConfig,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub strategy: InputStrategy,
    /// Seeds shuffling and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            optimizer: RmspropConfig::default(),
            clip_norm: Some(5.0),
            strategy: InputStrategy::Original,
            seed: 2016,
        }
    }
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Running accuracy over the epoch's training batches (dropout active).
    pub train_acc: f64,
    pub dev_acc: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`, label index order.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl Evaluation {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Result<Self> {
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        let mut total = 0;
        for (gold, pred) in pairs {
            confusion[gold.index()][pred.index()] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::Data("cannot evaluate on an empty dataset".into()));
        }
        let correct = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
        Ok(Evaluation {
            correct,
            total,
            accuracy: correct as f64 / total as f64,
            confusion,
        })
    }
}

/// Per-example predictions, inference mode.
pub fn predict<T: Scalar>(
    model: &SiameseModel<T>,
    examples: &[NliExample],
    strategy: InputStrategy,
    batch_size: usize,
) -> Result<Vec<(Label, Vec<T>)>> {
    let indexed = index_examples(examples, &model.vocab, strategy);
    let mut out = Vec::with_capacity(examples.len());
    for batch in batches_from_indexed(&indexed, batch_size.max(1), None) {
        for trace in model.forward_batch_traced(&batch, None)? {
            out.push((trace.prediction(), trace.probs().to_vec()));
        }
    }
    Ok(out)
}

/// Argmax accuracy and confusion matrix.
pub fn evaluate<T: Scalar>(model: &SiameseModel<T>, examples: &[NliExample], strategy: InputStrategy) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let preds = predict(model, examples, strategy, 256)?;
    Evaluation::from_pairs(examples.iter().zip(preds).map(|(ex, (p, _))| (ex.label, p)))
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Snapshot with the best dev accuracy (last epoch if there is no dev set).
    pub best: SiameseModel<T>,
    pub best_epoch: usize,
    pub best_dev_acc: Option<f64>,
    pub last: SiameseModel<T>,
    pub optimizer: RmspropState<T>,
    pub rng: Rng,
    pub log: Vec<EpochRecord>,
}

fn norm_report<T: Scalar>(model: &SiameseModel<T>) -> String {
    model
        .params()
        .iter()
        .map(|p| format!("{}={:.3e}", p.name(), p.value.sum_sq().sqrt().to_f64().unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Runs the epoch loop. `on_epoch` sees every record as it is produced.
pub fn train<T: Scalar>(
    mut model: SiameseModel<T>,
    train_set: &[NliExample],
    dev_set: &[NliExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Argument("epochs and batch size must be positive".into()));
    }
    let mut rng = Rng::new(config.seed);
    let mut optimizer = RmspropState::new(config.optimizer.clone(), model.params());
    let indexed = index_examples(train_set, &model.vocab, config.strategy);
    let mut log = Vec::new();
    let mut best: Option<(usize, Option<f64>, SiameseModel<T>)> = None;
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        let batches = batches_from_indexed(&indexed, config.batch_size, Some(&mut rng));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (bi, batch) in batches.iter().enumerate() {
            model.zero_grads();
            let (loss, ok) = model.loss_and_backward(batch, Some(&mut rng))?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::TrainingAbort(format!(
                    "non-finite loss at epoch {epoch}, batch {bi}; parameter norms: {}",
                    norm_report(&model)
                )));
            }
            if let Some(max) = config.clip_norm {
                clip_grad_norm(model.params_mut(), max);
            }
            optimizer.step(model.params_mut())?;
            loss_sum += loss * batch.len() as f64;
            correct += ok;
        }
        let dev_acc = if dev_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, dev_set, config.strategy)?.accuracy)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            dev_acc,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.push(record);
        let improved = match (&best, dev_acc) {
            (None, _) => true,
            (Some((_, Some(b), _)), Some(d)) => d > *b,
            (Some(_), None) => true,
            (Some((_, None, _)), Some(_)) => true,
        };
        if improved {
            best = Some((epoch, dev_acc, model.clone()));
        }
    }
    let (best_epoch, best_dev_acc, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        best_dev_acc,
        last: model,
        optimizer,
        rng,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let pairs = Label::ALL.iter().flat_map(|&l| [(l, l), (l, l)]);
        let ev = Evaluation::from_pairs(pairs).unwrap();
        assert_eq!(ev.accuracy, 1.0);
        assert_eq!(ev.confusion, [[2, 0, 0], [0, 2, 0], [0, 0, 2]]);
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let pairs = Label::ALL.iter().flat_map(|&l| std::iter::repeat_n((l, Label::Neutral), 5));
        let ev = Evaluation::from_pairs(pairs).unwrap();
        assert!((ev.accuracy - 1.0 / 3.0).abs() < 1e-15);
        let diag: usize = (0..3).map(|k| ev.confusion[k][k]).sum();
        assert_eq!(diag as f64 / ev.total as f64, ev.accuracy);
    }

    #[test]
    fn empty_evaluation_is_an_error() {
        assert!(Evaluation::from_pairs(std::iter::empty()).is_err());
    }
}

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use entail_core::checkpoint::checkpoint_dtype;
use entail_core::data::{apply_input_strategy, load_embeddings_file, load_snli, random_embeddings, tokenize, TokenSource};
use entail_core::matcher::NUM_CLASSES;
use entail_core::model::argmax;
use entail_core::optim::RmspropConfig;
use entail_core::train::{self, evaluate};
use entail_core::{
    load_checkpoint, save_checkpoint, Checkpoint, Error, Label, ModelConfig, NliExample, Rng, Scalar, SiameseModel,
    TrainConfig,
};
use serde_json::json;

use crate::heatmap::{render_html, HeatmapRendering};
use crate::{AttendArgs, AttendFormat, EvalArgs, EvalFormat, ParamsArgs, Precision, PredictArgs, Switch, Tokens, TrainArgs};

pub const BEST_CHECKPOINT: &str = "model.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const METRIC_LOG: &str = "metrics.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Argument(_)) => 1,
            CliError::Core(Error::TrainingAbort(_)) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stdout_err(source: io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn token_source(t: Tokens) -> TokenSource {
    match t {
        Tokens::Raw => TokenSource::Raw,
        Tokens::BinaryParse => TokenSource::BinaryParse,
    }
}

/// Loads a dataset, reporting skipped lines on stderr.
fn load_data(path: &Path, tokens: Tokens) -> Result<Vec<NliExample>, CliError> {
    let parsed = load_snli(path, token_source(tokens))?;
    if !parsed.malformed.is_empty() {
        eprintln!(
            "{}: skipped {} malformed line(s); first: {}",
            path.display(),
            parsed.malformed.len(),
            parsed.malformed[0]
        );
    }
    if parsed.dropped > 0 {
        eprintln!("{}: dropped {} example(s) without a gold label", path.display(), parsed.dropped);
    }
    if parsed.examples.is_empty() {
        return Err(Error::Data(format!("{} has no usable examples", path.display())).into());
    }
    Ok(parsed.examples)
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    match args.precision {
        Precision::F64 => train_as::<f64>(args),
        Precision::F32 => train_as::<f32>(args),
    }
}

fn train_as<T: Scalar>(args: &TrainArgs) -> Result<(), CliError> {
    let train_set = load_data(&args.train, args.tokens)?;
    let dev_set = load_data(&args.dev, args.tokens)?;
    let mut words = BTreeSet::new();
    for ex in train_set.iter().chain(&dev_set) {
        words.extend(ex.premise.iter().cloned());
        words.extend(ex.hypothesis.iter().cloned());
    }
    let mut rng = Rng::new(args.seed);
    let vocab = match &args.embeddings {
        Some(path) => load_embeddings_file::<T, _, _>(path, &words, None, &mut rng)?,
        None => random_embeddings::<T, _, _>(&words, args.embedding_dim, &mut rng),
    };
    eprintln!(
        "vocabulary: {} tokens, {} with pretrained vectors, dim {}",
        vocab.len(),
        vocab.pretrained_count(),
        vocab.dim()
    );
    let config = ModelConfig {
        embedding_dim: vocab.dim(),
        hidden: args.hidden,
        projection: args.projection,
        attention: args.attention == Switch::On,
        dropout: args.dropout,
        seed: args.seed,
    };
    let model = SiameseModel::new(config, vocab)?;
    let counts = model.count_parameters();
    eprintln!("parameters: {} trainable, {} frozen", counts.trainable, counts.frozen);

    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        optimizer: RmspropConfig {
            learning_rate: args.lr,
            ..RmspropConfig::default()
        },
        clip_norm: (args.clip_norm > 0.0).then_some(args.clip_norm),
        strategy: args.strategy,
        seed: args.seed,
    };

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let log_path = args.out.join(METRIC_LOG);
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    let mut log_error = None;
    let outcome = train::train(model, &train_set, &dev_set, &train_config, |rec| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  train acc {:.4}  dev acc {}  {:.1}s",
            rec.epoch,
            rec.train_loss,
            rec.train_acc,
            rec.dev_acc.map_or("-".into(), |a| format!("{a:.4}")),
            rec.wall_time_s
        );
        let line = serde_json::to_string(rec).expect("records serialize");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(io_err(&log_path)(e));
    }

    let steps = outcome.optimizer.steps;
    let last_epoch = outcome.log.len();
    let mut best = Checkpoint::new(outcome.best, args.strategy);
    best.epoch = outcome.best_epoch;
    save_checkpoint(&best, args.out.join(BEST_CHECKPOINT))?;
    let mut last = Checkpoint::new(outcome.last, args.strategy);
    last.optimizer = Some(outcome.optimizer);
    last.epoch = last_epoch;
    last.step = steps;
    last.rng = Some(outcome.rng.state());
    save_checkpoint(&last, args.out.join(LAST_CHECKPOINT))?;

    let final_dev = outcome.log.last().and_then(|r| r.dev_acc).unwrap_or(f64::NAN);
    println!("final dev accuracy: {final_dev:.4}");
    println!(
        "best dev accuracy: {:.4} (epoch {}), saved to {}",
        outcome.best_dev_acc.unwrap_or(f64::NAN),
        outcome.best_epoch,
        args.out.join(BEST_CHECKPOINT).display()
    );
    Ok(())
}

/// Runs `$body` with `$ck` bound to the checkpoint loaded at its stored precision.
macro_rules! with_checkpoint {
    ($path:expr, |$ck:ident| $body:expr) => {{
        let path: &Path = $path;
        match checkpoint_dtype(path)?.as_str() {
            "f32" => {
                let $ck = load_checkpoint::<f32>(path)?;
                $body
            }
            _ => {
                let $ck = load_checkpoint::<f64>(path)?;
                $body
            }
        }
    }};
}

/// Rejects data that shares no tokens with the checkpoint vocabulary.
fn check_vocab<T: Scalar>(model: &SiameseModel<T>, data: &[NliExample]) -> Result<(), CliError> {
    let mut known = 0usize;
    let mut total = 0usize;
    for ex in data {
        for t in ex.premise.iter().chain(&ex.hypothesis) {
            total += 1;
            if model.vocab.get(t).is_some() {
                known += 1;
            }
        }
    }
    if known == 0 {
        return Err(Error::Data(format!(
            "vocabulary mismatch: none of the {total} data tokens occur in the checkpoint vocabulary ({} entries)",
            model.vocab.len()
        ))
        .into());
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let data = load_data(&args.data, args.tokens)?;
    with_checkpoint!(&args.checkpoint, |ck| eval_with(&ck, &data, args.format))
}

fn eval_with<T: Scalar>(ck: &Checkpoint<T>, data: &[NliExample], format: EvalFormat) -> Result<(), CliError> {
    check_vocab(&ck.model, data)?;
    let ev = evaluate(&ck.model, data, ck.strategy)?;
    let mut out = io::stdout().lock();
    match format {
        EvalFormat::JsonLines => {
            let rec = json!({
                "accuracy": ev.accuracy,
                "correct": ev.correct,
                "total": ev.total,
                "labels": Label::ALL.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
                "confusion": ev.confusion,
            });
            writeln!(out, "{rec}").map_err(stdout_err)?;
        }
        EvalFormat::Text => {
            writeln!(out, "accuracy: {:.4} ({}/{})", ev.accuracy, ev.correct, ev.total).map_err(stdout_err)?;
            writeln!(out, "confusion matrix (rows: gold, columns: predicted)").map_err(stdout_err)?;
            let mut header = format!("{:<14}", "");
            for l in Label::ALL {
                header.push_str(&format!("{:>14}", l.as_str()));
            }
            writeln!(out, "{header}").map_err(stdout_err)?;
            for (g, gold) in Label::ALL.iter().enumerate() {
                let mut row = format!("{:<14}", gold.as_str());
                for p in 0..NUM_CLASSES {
                    row.push_str(&format!("{:>14}", ev.confusion[g][p]));
                }
                writeln!(out, "{row}").map_err(stdout_err)?;
            }
        }
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let data = load_data(&args.data, args.tokens)?;
    with_checkpoint!(&args.checkpoint, |ck| predict_with(&ck, &data))
}

fn predict_with<T: Scalar>(ck: &Checkpoint<T>, data: &[NliExample]) -> Result<(), CliError> {
    check_vocab(&ck.model, data)?;
    let preds = train::predict(&ck.model, data, ck.strategy, 256)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for (i, (ex, (label, probs))) in data.iter().zip(preds).enumerate() {
        let probs: Vec<f64> = probs.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect();
        let rec = json!({
            "index": i,
            "gold": ex.label.as_str(),
            "predicted": label.as_str(),
            "probabilities": {
                "entailment": probs[Label::Entailment.index()],
                "contradiction": probs[Label::Contradiction.index()],
                "neutral": probs[Label::Neutral.index()],
            },
        });
        writeln!(out, "{rec}").map_err(stdout_err)?;
    }
    out.flush().map_err(stdout_err)
}

pub fn attend(args: &AttendArgs) -> Result<(), CliError> {
    let sentence = |text: &str, which: &str| {
        tokenize(text).map_err(|_| CliError::Usage(format!("--{which} must contain at least one word")))
    };
    let pair = NliExample {
        premise: sentence(&args.premise, "premise")?,
        hypothesis: sentence(&args.hypothesis, "hypothesis")?,
        label: Label::Neutral,
    };
    with_checkpoint!(&args.checkpoint, |ck| attend_with(&ck, &pair, args.format))
}

fn attend_with<T: Scalar>(ck: &Checkpoint<T>, pair: &NliExample, format: AttendFormat) -> Result<(), CliError> {
    let model = &ck.model;
    if !model.config.attention {
        return Err(CliError::Usage("checkpoint was trained without inner attention".into()));
    }
    let pair = apply_input_strategy(pair, ck.strategy);
    let encode = |tokens: &[String]| -> Result<(Vec<usize>, Vec<bool>), CliError> {
        if tokens.is_empty() {
            return Err(CliError::Usage(format!(
                "the {} strategy removed every word of a sentence",
                ck.strategy
            )));
        }
        Ok((model.vocab.encode(tokens), vec![true; tokens.len()]))
    };
    let (p_idx, p_mask) = encode(&pair.premise)?;
    let (h_idx, h_mask) = encode(&pair.hypothesis)?;
    let trace = model.forward_pair((&p_idx, &p_mask), (&h_idx, &h_mask), None)?;
    let probs: Vec<f64> = trace.probs().iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect();
    let label = Label::from_index(argmax(trace.probs())).expect("three classes");

    let weights = |idx: &[usize], mask: &[bool]| -> Result<Vec<f64>, CliError> {
        let enc = model.encode(idx, mask)?;
        let alpha = enc.alpha.expect("attention model");
        Ok(alpha.iter().map(|a| a.to_f64().unwrap_or(f64::NAN)).collect())
    };
    let maps = [
        HeatmapRendering::new("premise", &pair.premise, &weights(&p_idx, &p_mask)?),
        HeatmapRendering::new("hypothesis", &pair.hypothesis, &weights(&h_idx, &h_mask)?),
    ];
    let mut out = io::stdout().lock();
    match format {
        AttendFormat::Html => write!(out, "{}", render_html(label.as_str(), &maps)).map_err(stdout_err)?,
        AttendFormat::Text => {
            let probs: Vec<String> = Label::ALL
                .iter()
                .map(|l| format!("{}={:.4}", l.as_str(), probs[l.index()]))
                .collect();
            writeln!(out, "predicted: {} ({})", label.as_str(), probs.join(", ")).map_err(stdout_err)?;
            for m in &maps {
                write!(out, "{}", m.render_text()).map_err(stdout_err)?;
            }
        }
    }
    Ok(())
}

pub fn params(args: &ParamsArgs) -> Result<(), CliError> {
    let config = ModelConfig {
        embedding_dim: args.embedding_dim,
        hidden: args.hidden,
        projection: args.projection,
        attention: args.attention == Switch::On,
        ..ModelConfig::default()
    };
    config.validate()?;
    let basic = ModelConfig {
        attention: false,
        ..config.clone()
    };
    println!(
        "embedding_dim={} hidden={} projection={} attention={}",
        config.embedding_dim, config.hidden, config.projection, config.attention
    );
    println!("trainable parameters: {}", config.trainable_parameters());
    println!("  without attention:  {}", basic.trainable_parameters());
    println!("frozen parameters: embedding_dim x vocabulary size");
    Ok(())
}

//! Shared gradient-check harnesses and fixtures for the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use entail_core::data::{random_embeddings, Batch, NliExample, TokenSource};
use entail_core::encoder::{
    bilstm_backward, bilstm_forward_traced, encode_sentence_traced, encoder_backward, inner_attention_backward,
    inner_attention_traced, lstm_cell_step_backward, lstm_cell_step_cached, mean_pool, mean_pool_backward,
    BiLstmEncoder, InnerAttentionParams, LstmParams, SentenceEncoder,
};
use entail_core::gradcheck::{grad_check, Differentiable, FnPair};
use entail_core::matcher::{classify_backward, classify_traced, match_vectors, match_vectors_backward, Label, MatchHead};
use entail_core::model::{cross_entropy, cross_entropy_backward, ModelConfig, SiameseModel};
use entail_core::tensor::{dot, log_sum_exp, softmax};
use entail_core::{Parameterized, Result, Rng, Tensor};

pub const GRAD_TOL: f64 = 1e-4;
pub const EPS: f64 = 1e-5;
pub const SEEDS: u64 = 20;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn toy_examples() -> Vec<NliExample> {
    entail_core::data::load_snli(fixture("toy_nli.jsonl"), TokenSource::Raw).unwrap().examples
}

pub fn rand_tensor(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.uniform(-scale, scale))
}

pub fn rand_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-scale, scale)).collect()
}

fn col(v: &[f64]) -> Tensor {
    Tensor::column(v).unwrap()
}

/// Prefix mask with `len` real positions out of `width`.
pub fn prefix_mask(len: usize, width: usize) -> Vec<bool> {
    (0..width).map(|t| t < len).collect()
}

fn load_params<P: Parameterized<f64>>(p: &mut P, values: &[Tensor]) {
    for (param, v) in p.params_mut().into_iter().zip(values) {
        param.assign(v).unwrap();
    }
}

fn grads_of<P: Parameterized<f64>>(p: &P) -> Vec<Tensor> {
    p.params().iter().map(|q| q.grad.clone()).collect()
}

fn values_of<P: Parameterized<f64>>(p: &P) -> Vec<Tensor> {
    p.params().iter().map(|q| q.value.clone()).collect()
}

fn run<F: Differentiable<f64>>(mut f: F, inputs: &[Tensor]) -> f64 {
    grad_check(&mut f, inputs, EPS).unwrap().max_rel_error
}

/// Random LSTM parameters with larger weights than init so gates are not near-linear.
fn lstm_params(rng: &mut Rng, e: usize, d: usize) -> LstmParams<f64> {
    let mut p = LstmParams::new("t", e, d, rng);
    for q in p.params_mut() {
        let v = rand_tensor(rng, q.value.rows(), q.value.cols(), 0.6);
        q.assign(&v).unwrap();
    }
    p
}

pub fn lstm_step(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (e, d) = (1 + rng.below(4), 1 + rng.below(4));
    let params = lstm_params(&mut rng, e, d);
    let wh = rand_vec(&mut rng, d, 1.0);
    let wc = rand_vec(&mut rng, d, 1.0);
    let inputs = [
        col(&rand_vec(&mut rng, e, 1.0)),
        col(&rand_vec(&mut rng, d, 1.0)),
        col(&rand_vec(&mut rng, d, 1.0)),
    ];
    let all: Vec<Tensor> = inputs.iter().cloned().chain(values_of(&params)).collect();
    let p0 = params.clone();
    let objective = |x: &[Tensor], p: &mut LstmParams<f64>| -> Result<_> {
        load_params(p, &x[3..]);
        lstm_cell_step_cached(x[0].as_slice(), x[1].as_slice(), x[2].as_slice(), p)
    };
    let mut pv = p0.clone();
    let mut pg = p0;
    let (wh2, wc2) = (wh.clone(), wc.clone());
    run(
        FnPair {
            value: move |x: &[Tensor]| {
                let c = objective(x, &mut pv)?;
                Ok(dot(&c.h, &wh) + dot(&c.c, &wc))
            },
            gradient: move |x: &[Tensor]| {
                let c = objective(x, &mut pg)?;
                pg.zero_grads();
                let g = lstm_cell_step_backward(&mut pg, x[0].as_slice(), &c, &wh2, &wc2)?;
                let mut out = vec![col(&g.dx), col(&g.dh_prev), col(&g.dc_prev)];
                out.extend(grads_of(&pg));
                Ok(out)
            },
        },
        &all,
    )
}

fn bilstm_params(rng: &mut Rng, e: usize, d: usize) -> BiLstmEncoder<f64> {
    BiLstmEncoder {
        forward: lstm_params(rng, e, d),
        backward: lstm_params(rng, e, d),
    }
}

pub fn bilstm(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (e, d) = (1 + rng.below(4), 1 + rng.below(4));
    let width = 1 + rng.below(6);
    let len = 1 + rng.below(width);
    let mask = prefix_mask(len, width);
    let enc = bilstm_params(&mut rng, e, d);
    let weights = rand_tensor(&mut rng, 2 * d, width, 1.0);
    let x = rand_tensor(&mut rng, e, width, 1.0);
    let mut all = vec![x];
    all.extend(values_of(&enc));
    let (mut ev, mut eg) = (enc.clone(), enc);
    let w2 = weights.clone();
    let m2 = mask.clone();
    run(
        FnPair {
            value: move |x: &[Tensor]| {
                load_params(&mut ev, &x[1..]);
                let (y, _) = bilstm_forward_traced(&ev, &x[0], &mask)?;
                Ok(dot(y.as_slice(), weights.as_slice()))
            },
            gradient: move |x: &[Tensor]| {
                load_params(&mut eg, &x[1..]);
                eg.zero_grads();
                let (_, tr) = bilstm_forward_traced(&eg, &x[0], &m2)?;
                let dx = bilstm_backward(&mut eg, &tr, &w2, true)?.expect("dx requested");
                let mut out = vec![dx];
                out.extend(grads_of(&eg));
                Ok(out)
            },
        },
        &all,
    )
}

pub fn mean_pooling(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (rows, width) = (1 + rng.below(6), 1 + rng.below(6));
    let mask = prefix_mask(1 + rng.below(width), width);
    let w = rand_vec(&mut rng, rows, 1.0);
    let m2 = mask.clone();
    let w2 = w.clone();
    run(
        FnPair {
            value: move |x: &[Tensor]| Ok(dot(&mean_pool(&x[0], &mask)?, &w)),
            gradient: move |_: &[Tensor]| Ok(vec![mean_pool_backward(&w2, &m2)?]),
        },
        &[rand_tensor(&mut rng, rows, width, 1.0)],
    )
}

fn attention_params(rng: &mut Rng, width: usize) -> InnerAttentionParams<f64> {
    let mut p = InnerAttentionParams::new(width, rng);
    for q in p.params_mut() {
        let v = rand_tensor(rng, q.value.rows(), q.value.cols(), 0.8);
        q.assign(&v).unwrap();
    }
    p
}

/// Full block: `Y → (mean pool → R_ave) → inner attention → R_att`, all routes into `Y`.
pub fn inner_attention_block(seed: u64, width: usize, len: usize, pad: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let params = attention_params(&mut rng, width);
    let mask = prefix_mask(len, len + pad);
    let w = rand_vec(&mut rng, width, 1.0);
    let mut y = rand_tensor(&mut rng, width, len + pad, 1.0);
    for t in len..len + pad {
        y.set_col(t, &vec![0.0; width]);
    }
    let mut all = vec![y];
    all.extend(values_of(&params));
    let (mut pv, mut pg) = (params.clone(), params);
    let (m2, w2) = (mask.clone(), w.clone());
    run(
        FnPair {
            value: move |x: &[Tensor]| {
                load_params(&mut pv, &x[1..]);
                let r_ave = mean_pool(&x[0], &mask)?;
                let (r_att, _) = inner_attention_traced(&x[0], &r_ave, &pv, &mask)?;
                Ok(dot(&r_att, &w))
            },
            gradient: move |x: &[Tensor]| {
                load_params(&mut pg, &x[1..]);
                pg.zero_grads();
                let r_ave = mean_pool(&x[0], &m2)?;
                let (_, tr) = inner_attention_traced(&x[0], &r_ave, &pg, &m2)?;
                let (mut dy, d_ave) = inner_attention_backward(&mut pg, &x[0], &r_ave, &m2, &tr, &w2)?;
                dy.add_assign(&mean_pool_backward(&d_ave, &m2)?)?;
                let mut out = vec![dy];
                out.extend(grads_of(&pg));
                Ok(out)
            },
        },
        &all,
    )
}

pub fn inner_attention(seed: u64) -> f64 {
    let mut rng = Rng::new(seed + 1000);
    let width = 2 * (1 + rng.below(4));
    let len = 1 + rng.below(5);
    let pad = rng.below(3);
    inner_attention_block(seed, width, len, pad)
}

pub fn matching(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let n = 1 + rng.below(6);
    let w = rand_vec(&mut rng, 4 * n, 1.0);
    let w2 = w.clone();
    run(
        FnPair {
            value: move |x: &[Tensor]| Ok(dot(&match_vectors(x[0].as_slice(), x[1].as_slice())?, &w)),
            gradient: move |x: &[Tensor]| {
                let (dp, dh) = match_vectors_backward(x[0].as_slice(), x[1].as_slice(), &w2);
                Ok(vec![col(&dp), col(&dh)])
            },
        },
        &[col(&rand_vec(&mut rng, n, 1.0)), col(&rand_vec(&mut rng, n, 1.0))],
    )
}

fn head_params(rng: &mut Rng, rel: usize, m: usize) -> MatchHead<f64> {
    let mut h = MatchHead::new(rel, m, rng);
    for q in h.params_mut() {
        let v = rand_tensor(rng, q.value.rows(), q.value.cols(), 0.7);
        q.assign(&v).unwrap();
    }
    h
}

/// Linear functional of the logits, through tanh projection and (fixed-mask) dropout.
pub fn projection(seed: u64) -> f64 {
    head_check(seed, false)
}

/// Softmax cross-entropy over the head's logits.
pub fn classifier(seed: u64) -> f64 {
    head_check(seed, true)
}

fn head_check(seed: u64, with_loss: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let (rel, m) = (4 * (1 + rng.below(3)), 1 + rng.below(6));
    let head = head_params(&mut rng, rel, m);
    let w = rand_vec(&mut rng, 3, 1.0);
    let label = rng.below(3);
    let dropout_seed = rng.next_u64();
    let objective = move |logits: &[f64]| -> (f64, Vec<f64>) {
        if with_loss {
            let mut p = softmax(logits).unwrap();
            let v = log_sum_exp(logits) - logits[label];
            p[label] -= 1.0;
            (v, p)
        } else {
            (dot(logits, &w), w.clone())
        }
    };
    let mut all = vec![col(&rand_vec(&mut rng, rel, 1.0))];
    all.extend(values_of(&head));
    let (mut hv, mut hg) = (head.clone(), head);
    let objective2 = objective.clone();
    run(
        FnPair {
            value: move |x: &[Tensor]| {
                load_params(&mut hv, &x[1..]);
                let mut r = Rng::new(dropout_seed);
                let tr = classify_traced(x[0].as_slice(), &hv, Some((0.25, &mut r)))?;
                Ok(objective(&tr.logits).0)
            },
            gradient: move |x: &[Tensor]| {
                load_params(&mut hg, &x[1..]);
                hg.zero_grads();
                let mut r = Rng::new(dropout_seed);
                let tr = classify_traced(x[0].as_slice(), &hg, Some((0.25, &mut r)))?;
                let d_rel = classify_backward(&mut hg, &tr, &objective2(&tr.logits).1)?;
                let mut out = vec![col(&d_rel)];
                out.extend(grads_of(&hg));
                Ok(out)
            },
        },
        &all,
    )
}

pub fn cross_entropy_loss(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let b = 1 + rng.below(5);
    let labels: Vec<Label> = (0..b).map(|_| Label::from_index(rng.below(3)).unwrap()).collect();
    let l2 = labels.clone();
    run(
        FnPair {
            value: move |x: &[Tensor]| cross_entropy(&x[0], &labels),
            gradient: move |x: &[Tensor]| Ok(vec![cross_entropy_backward(&x[0], &l2)?]),
        },
        &[rand_tensor(&mut rng, b, 3, 3.0)],
    )
}

/// Encoder (biLSTM + pooling + optional attention) w.r.t. all its parameters.
pub fn encoder(seed: u64, attention: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let (e, d) = (1 + rng.below(4), 1 + rng.below(8));
    let len = 1 + rng.below(6);
    let pad = rng.below(2);
    let emb = rand_tensor(&mut rng, 8, e, 1.0);
    let mut enc = SentenceEncoder::new(e, d, attention, &mut rng);
    let scrambled: Vec<Tensor> =
        enc.params().iter().map(|p| rand_tensor(&mut rng, p.value.rows(), p.value.cols(), 0.5)).collect();
    load_params(&mut enc, &scrambled);
    let tokens: Vec<usize> = (0..len + pad).map(|t| if t < len { 1 + rng.below(7) } else { 0 }).collect();
    let mask = prefix_mask(len, len + pad);
    let w = rand_vec(&mut rng, 2 * d, 1.0);
    let (mut ev, mut eg) = (enc.clone(), enc);
    let (e2, t2, m2, w2) = (emb.clone(), tokens.clone(), mask.clone(), w.clone());
    run(
        FnPair {
            value: move |x: &[Tensor]| {
                load_params(&mut ev, x);
                let tr = encode_sentence_traced(&tokens, &mask, &emb, &ev)?;
                Ok(dot(tr.encoded.representation(), &w))
            },
            gradient: move |x: &[Tensor]| {
                load_params(&mut eg, x);
                eg.zero_grads();
                let tr = encode_sentence_traced(&t2, &m2, &e2, &eg)?;
                encoder_backward(&mut eg, &tr, &w2)?;
                Ok(grads_of(&eg))
            },
        },
        &scrambled,
    )
}

pub fn tiny_model(seed: u64, attention: bool) -> SiameseModel<f64> {
    let mut rng = Rng::new(seed);
    let tokens: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
    let vocab = random_embeddings(&tokens, 4, &mut rng);
    let cfg = ModelConfig {
        embedding_dim: 4,
        hidden: 3,
        projection: 5,
        attention,
        dropout: 0.25,
        seed,
    };
    let mut model = SiameseModel::new(cfg, vocab).unwrap();
    // Larger weights than init so every path carries signal.
    let scrambled: Vec<Tensor> =
        model.params().iter().map(|p| rand_tensor(&mut rng, p.value.rows(), p.value.cols(), 0.5)).collect();
    load_params(&mut model, &scrambled);
    model
}

pub fn tiny_batch(rng: &mut Rng, vocab: usize) -> Batch {
    let pairs: Vec<_> = (0..2)
        .map(|_| {
            let lp = 1 + rng.below(5);
            let lh = 1 + rng.below(5);
            (
                (0..lp).map(|_| 1 + rng.below(vocab - 1)).collect(),
                (0..lh).map(|_| 1 + rng.below(vocab - 1)).collect(),
                Label::from_index(rng.below(3)).unwrap(),
            )
        })
        .collect();
    Batch::from_indexed(&pairs)
}

/// Mean batch cross-entropy of the tiny model (e=4, d=3, m=5, L≤5, B=2), dropout on with a fixed mask.
pub fn end_to_end(seed: u64, attention: bool) -> f64 {
    let model = tiny_model(seed, attention);
    let mut rng = Rng::new(seed + 7);
    let batch = tiny_batch(&mut rng, model.vocab.len());
    let dropout_seed = rng.next_u64();
    let all = values_of(&model);
    let (mut mv, mut mg) = (model.clone(), model);
    let b2 = batch.clone();
    run(
        FnPair {
            value: move |x: &[Tensor]| {
                load_params(&mut mv, x);
                let traces = mv.forward_batch_traced(&batch, Some(&mut Rng::new(dropout_seed)))?;
                let logits = Tensor::from_rows(&traces.iter().map(|t| t.logits().to_vec()).collect::<Vec<_>>())?;
                cross_entropy(&logits, &batch.labels)
            },
            gradient: move |x: &[Tensor]| {
                load_params(&mut mg, x);
                mg.zero_grads();
                mg.loss_and_backward(&b2, Some(&mut Rng::new(dropout_seed)))?;
                Ok(grads_of(&mg))
            },
        },
        &all,
    )
}

/// Max error over the seeded instances.
pub fn worst(f: impl Fn(u64) -> f64) -> f64 {
    (0..SEEDS).map(f).fold(0.0, f64::max)
}

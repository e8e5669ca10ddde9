#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn entail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entail")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn train_toy(out: &Path, extra: &[&str]) -> Output {
    let (train, dev, vectors) = (fixture("toy_nli.jsonl"), fixture("toy_nli_dev.jsonl"), fixture("toy_vectors_16d.txt"));
    let mut args = vec![
        "train",
        "--train",
        train.to_str().unwrap(),
        "--dev",
        dev.to_str().unwrap(),
        "--embeddings",
        vectors.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--hidden",
        "8",
        "--projection",
        "8",
        "--epochs",
        "3",
        "--batch-size",
        "16",
    ];
    args.extend_from_slice(extra);
    entail(&args)
}

#[test]
fn missing_train_flag_is_a_usage_error() {
    let o = entail(&["train", "--dev", "d.jsonl", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--train"));
}

#[test]
fn help_lists_flags_with_defaults() {
    let o = entail(&["train", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = stdout(&o);
    for flag in ["--strategy", "--attention", "--batch-size", "--dropout", "--lr", "--seed", "--epochs"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert!(help.contains("[default: 128]") && help.contains("[default: 0.25]"));
}

#[test]
fn bad_strategy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_toy(dir.path(), &["--strategy", "reverse-everything"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = entail(&["train", "--train", "/nonexistent.jsonl", "--dev", "/nonexistent.jsonl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn toy_training_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_toy(dir.path(), &["--strategy", "differentiate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final dev accuracy:"));
    assert!(dir.path().join("model.ckpt").exists() && dir.path().join("last.ckpt").exists());
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["epoch"], i + 1);
        for key in ["train_loss", "train_acc", "dev_acc", "wall_time_s"] {
            assert!(r[key].is_number(), "{key}");
        }
    }
    // The strategy travels in the checkpoint header.
    let bytes = std::fs::read(dir.path().join("model.ckpt")).unwrap();
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + len]).unwrap();
    assert_eq!(header["strategy"], "differentiate");
}

#[test]
fn same_seed_gives_same_metric_log() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(train_toy(a.path(), &[]).status.success());
    assert!(train_toy(b.path(), &[]).status.success());
    let strip = |p: &Path| -> Vec<serde_json::Value> {
        std::fs::read_to_string(p.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_s");
                v
            })
            .collect()
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    assert_eq!(std::fs::read(a.path().join("model.ckpt")).unwrap(), std::fs::read(b.path().join("model.ckpt")).unwrap());
}

#[test]
fn eval_is_repeatable_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &[]).status.success());
    let ck = dir.path().join("model.ckpt");
    let data = fixture("toy_nli.jsonl");
    let args = ["eval", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap()];
    let (first, second) = (entail(&args), entail(&args));
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&second));
    let text = stdout(&first);
    let acc_line = text.lines().next().unwrap();
    assert!(acc_line.starts_with("accuracy: "));
    let acc: f64 = acc_line["accuracy: ".len()..].split_whitespace().next().unwrap().parse().unwrap();
    assert_eq!(acc_line.split_whitespace().nth(1).unwrap().split('.').nth(1).unwrap().len(), 4);

    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json-lines"]);
    let rec: serde_json::Value = serde_json::from_str(stdout(&entail(&json_args)).trim()).unwrap();
    let m = rec["confusion"].as_array().unwrap();
    let cell = |g: usize, p: usize| m[g][p].as_u64().unwrap();
    let total: u64 = (0..3).flat_map(|g| (0..3).map(move |p| (g, p))).map(|(g, p)| cell(g, p)).sum();
    let correct: u64 = (0..3).map(|k| cell(k, k)).sum();
    assert_eq!(total, 64);
    assert_eq!(rec["total"], total);
    assert!((correct as f64 / total as f64 - acc).abs() < 5e-5);
    // The text matrix carries the same counts.
    let rows: Vec<Vec<u64>> = text.lines().skip(3).map(|l| l.split_whitespace().skip(1).map(|c| c.parse().unwrap()).collect()).collect();
    for g in 0..3 {
        for p in 0..3 {
            assert_eq!(rows[g][p], cell(g, p));
        }
    }
}

#[test]
fn eval_rejects_empty_data() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &[]).status.success());
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = entail(&["eval", "--checkpoint", dir.path().join("model.ckpt").to_str().unwrap(), "--data", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no usable examples"));
}

#[test]
fn eval_rejects_foreign_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &[]).status.success());
    let foreign = dir.path().join("foreign.jsonl");
    std::fs::write(&foreign, r#"{"gold_label": "neutral", "sentence1": "zzqx yyqw", "sentence2": "xxqv"}"#).unwrap();
    let o = entail(&["eval", "--checkpoint", dir.path().join("model.ckpt").to_str().unwrap(), "--data", foreign.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vocabulary mismatch"));
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &[]).status.success());
    let ck = dir.path().join("model.ckpt");
    let mut bytes = std::fs::read(&ck).unwrap();
    let n = bytes.len();
    bytes[n - 40] ^= 1;
    std::fs::write(&ck, bytes).unwrap();
    let data = fixture("toy_nli_dev.jsonl");
    let o = entail(&["eval", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_emits_one_record_per_example() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &[]).status.success());
    let data = fixture("toy_nli_dev.jsonl");
    let o = entail(&["predict", "--checkpoint", dir.path().join("model.ckpt").to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 12);
    for r in &records {
        let probs: Vec<(String, f64)> = r["probabilities"]
            .as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_f64().unwrap()))
            .collect();
        assert!((probs.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-6);
        let best = probs.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
        assert_eq!(r["predicted"], best.0.as_str());
        assert!(r["gold"].is_string());
    }
}

#[test]
fn attend_renders_both_sentences() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &[]).status.success());
    let ck = dir.path().join("model.ckpt");
    let ck = ck.to_str().unwrap();
    let o = entail(&[
        "attend",
        "--checkpoint",
        ck,
        "--premise",
        "The boy is running through a grassy area.",
        "--hypothesis",
        "A boy is running outside.",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("predicted: "));
    assert!(text.contains("premise:") && text.contains("hypothesis:"));
    assert!(text.contains("intensity=0.00") && text.contains("intensity=1.00"));
    assert!(text.contains("grassy") && text.contains("outside"));

    let o = entail(&["attend", "--checkpoint", ck, "--premise", "zzunknownword", "--hypothesis", "dog", "--format", "html"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let html = stdout(&o);
    assert!(html.starts_with("<!DOCTYPE html>") && html.contains("</html>"));
    // single-token sentences are the degenerate all-equal case
    assert_eq!(html.matches("rgba(200, 30, 30, 0.500)").count(), 2);

    let o = entail(&["attend", "--checkpoint", ck, "--premise", "  ", "--hypothesis", "dog"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn attend_needs_an_attention_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &["--attention", "off"]).status.success());
    let ck = dir.path().join("model.ckpt");
    let o = entail(&["attend", "--checkpoint", ck.to_str().unwrap(), "--premise", "a dog", "--hypothesis", "a cat"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn f32_checkpoints_load_transparently() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &["--precision", "f32"]).status.success());
    let data = fixture("toy_nli_dev.jsonl");
    let o = entail(&["eval", "--checkpoint", dir.path().join("model.ckpt").to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn params_reports_attention_difference() {
    let o = entail(&["params", "--embedding-dim", "300", "--hidden", "300", "--projection", "300"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("trainable parameters: 2884203"));
    assert!(text.contains("without attention:  2163603"));
}

//! Line-delimited SNLI records.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matcher::Label;

use super::tokenize::{tokenize, tokenize_binary_parse};

/// A tokenized premise/hypothesis pair with its gold label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NliExample {
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub label: Label,
}

/// Where tokens come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TokenSource {
    /// `sentence1` / `sentence2` through [`tokenize`].
    #[default]
    Raw,
    /// The pre-tokenized `sentence{1,2}_binary_parse` fields.
    BinaryParse,
}

#[derive(Deserialize)]
struct Record {
    gold_label: String,
    sentence1: String,
    sentence2: String,
    #[serde(default)]
    sentence1_binary_parse: Option<String>,
    #[serde(default)]
    sentence2_binary_parse: Option<String>,
}

/// Outcome of parsing a stream. `retained + dropped + malformed == total`.
#[derive(Debug, Default)]
pub struct SnliParse {
    pub examples: Vec<NliExample>,
    /// Records whose gold label is `-` (no annotator consensus).
    pub dropped: usize,
    pub malformed: Vec<Error>,
    /// Non-blank lines seen.
    pub total: usize,
}

fn parse_record(line: &str, lineno: usize, source: TokenSource) -> Result<Option<NliExample>> {
    let bad = |message: String| Error::Parse { line: lineno, message };
    let rec: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    if rec.gold_label == "-" {
        return Ok(None);
    }
    let label: Label = rec.gold_label.parse().map_err(|e: Error| bad(e.to_string()))?;
    let (premise, hypothesis) = match source {
        TokenSource::Raw => (tokenize(&rec.sentence1), tokenize(&rec.sentence2)),
        TokenSource::BinaryParse => {
            let get = |f: Option<String>, name: &str| f.ok_or_else(|| bad(format!("missing {name}")));
            (
                tokenize_binary_parse(&get(rec.sentence1_binary_parse, "sentence1_binary_parse")?),
                tokenize_binary_parse(&get(rec.sentence2_binary_parse, "sentence2_binary_parse")?),
            )
        }
    };
    Ok(Some(NliExample {
        premise: premise.map_err(|e| bad(e.to_string()))?,
        hypothesis: hypothesis.map_err(|e| bad(e.to_string()))?,
        label,
    }))
}

/// Parses JSON-lines SNLI records. Malformed lines are collected, not fatal.
pub fn parse_snli<R: BufRead>(reader: R, source: TokenSource) -> Result<SnliParse> {
    let mut out = SnliParse::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.total += 1;
        match parse_record(&line, i + 1, source) {
            Ok(Some(ex)) => out.examples.push(ex),
            Ok(None) => out.dropped += 1,
            Err(e) => out.malformed.push(e),
        }
    }
    Ok(out)
}

pub fn load_snli(path: impl AsRef<Path>, source: TokenSource) -> Result<SnliParse> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_snli(BufReader::new(file), source)
}

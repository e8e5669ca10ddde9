//! Vocabulary and frozen embedding table.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
/// Out-of-vocabulary rows are drawn from `Uniform(−OOV_SCALE, OOV_SCALE)`.
pub const OOV_SCALE: f64 = 0.05;

/// Token ↔ index map plus the `V × e` embedding matrix. Never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab<T> {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Tensor2D<T>,
    /// Whether each row came from the vector file.
    pretrained: Vec<bool>,
}

impl<T: Scalar> Vocab<T> {
    /// Rebuilds a vocabulary from its parts, e.g. from a checkpoint.
    pub fn from_parts(tokens: Vec<String>, embeddings: Tensor2D<T>) -> Result<Self> {
        if tokens.len() != embeddings.rows() {
            return Err(Error::Data(format!(
                "vocabulary has {} tokens but embedding table has {} rows",
                tokens.len(),
                embeddings.rows()
            )));
        }
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::Data("vocabulary must start with <pad>, <unk>".into()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let pretrained = vec![false; tokens.len()];
        Ok(Vocab {
            tokens,
            index,
            embeddings,
            pretrained,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn embeddings(&self) -> &Tensor2D<T> {
        &self.embeddings
    }

    pub fn is_pretrained(&self, idx: usize) -> bool {
        self.pretrained[idx]
    }

    pub fn mark_pretrained(&mut self, rows: &[usize]) -> Result<()> {
        for &r in rows {
            *self
                .pretrained
                .get_mut(r)
                .ok_or_else(|| Error::Data(format!("pretrained row {r} out of range")))? = true;
        }
        Ok(())
    }

    pub fn pretrained_count(&self) -> usize {
        self.pretrained.iter().filter(|&&p| p).count()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or [`UNK`].
    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }
}

fn vocab_tokens<I, S>(tokens: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let set: BTreeSet<String> = tokens
        .into_iter()
        .map(|t| t.as_ref().to_string())
        .filter(|t| t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    let mut out = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    out.extend(set);
    out
}

/// Builds a vocabulary over `tokens` (sorted, deduplicated) with every row randomly drawn.
pub fn random_embeddings<T: Scalar, I, S>(tokens: I, dim: usize, rng: &mut Rng) -> Vocab<T>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let tokens = vocab_tokens(tokens);
    let embeddings = Tensor2D::from_fn(tokens.len(), dim, |r, _| {
        if r == PAD {
            T::zero()
        } else {
            T::lit(rng.uniform(-OOV_SCALE, OOV_SCALE))
        }
    });
    let mut v = Vocab::from_parts(tokens, embeddings).expect("built with pad and unk");
    v.pretrained = vec![false; v.tokens.len()];
    v
}

/// Loads `token v1 … v_dim` lines for the given vocabulary tokens.
///
/// Tokens found in the file get the file vector (an exact-case hit wins over a
/// case-folded one); the rest, including `<unk>`, get OOV draws. `dim` is taken
/// from the first line when not given. Lines with fewer than `dim` values are a
/// parse error; extra leading fields are treated as part of the token.
pub fn load_embeddings<T: Scalar, R: BufRead, I, S>(
    reader: R,
    tokens: I,
    dim: Option<usize>,
    rng: &mut Rng,
) -> Result<Vocab<T>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let tokens = vocab_tokens(tokens);
    let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut dim = dim;
    let mut found: HashMap<usize, (bool, Vec<T>)> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let want = *dim.get_or_insert(fields.len().saturating_sub(1));
        if want == 0 || fields.len() < want + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected a token and {want} values, got {} fields", fields.len()),
            });
        }
        let split = fields.len() - want;
        let word = fields[..split].join(" ");
        let (slot, exact) = match index.get(word.as_str()) {
            Some(&s) => (s, true),
            None => match index.get(word.to_lowercase().as_str()) {
                Some(&s) => (s, false),
                None => continue,
            },
        };
        if slot == PAD || found.get(&slot).is_some_and(|(prev_exact, _)| *prev_exact || !exact) {
            continue;
        }
        let values = fields[split..]
            .iter()
            .map(|f| {
                T::from_str_radix(f, 10).map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad value {f:?}"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        found.insert(slot, (exact, values));
    }
    let dim = dim.ok_or_else(|| Error::Data("embedding file is empty and no dimension was given".into()))?;
    let mut embeddings = Tensor2D::zeros(tokens.len(), dim);
    let mut pretrained = vec![false; tokens.len()];
    for r in 1..tokens.len() {
        match found.get(&r) {
            Some((_, values)) => {
                embeddings.row_mut(r).copy_from_slice(values);
                pretrained[r] = true;
            }
            None => {
                for v in embeddings.row_mut(r) {
                    *v = T::lit(rng.uniform(-OOV_SCALE, OOV_SCALE));
                }
            }
        }
    }
    let mut vocab = Vocab::from_parts(tokens, embeddings)?;
    vocab.pretrained = pretrained;
    Ok(vocab)
}

pub fn load_embeddings_file<T: Scalar, I, S>(
    path: impl AsRef<Path>,
    tokens: I,
    dim: Option<usize>,
    rng: &mut Rng,
) -> Result<Vocab<T>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_embeddings(BufReader::new(file), tokens, dim, rng)
}

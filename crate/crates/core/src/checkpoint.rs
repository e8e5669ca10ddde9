//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ENTAILCK"            8-byte magic
//! version               u32
//! header length         u64
//! header                JSON: dtype, configs, vocabulary, counters, rng, tensor directory
//! tensor blocks         raw scalars, in directory order
//! sha256                32 bytes over everything above
//! ```
//!
//! Each directory entry also carries the sha256 of its block.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{InputStrategy, Vocab};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SiameseModel};
use crate::optim::{RmspropConfig, RmspropState};
use crate::param::Parameterized;
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

pub const MAGIC: &[u8; 8] = b"ENTAILCK";
pub const FORMAT_VERSION: u32 = 1;
const EMBEDDINGS: &str = "embeddings";
const OPT_PREFIX: &str = "rmsprop.";

/// Everything needed to resume or evaluate a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: SiameseModel<T>,
    pub strategy: InputStrategy,
    pub optimizer: Option<RmspropState<T>>,
    pub epoch: usize,
    pub step: u64,
    pub rng: Option<RngState>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: SiameseModel<T>, strategy: InputStrategy) -> Self {
        Checkpoint {
            model,
            strategy,
            optimizer: None,
            epoch: 0,
            step: 0,
            rng: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: RmspropConfig,
    steps: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    model: ModelConfig,
    strategy: InputStrategy,
    epoch: usize,
    step: u64,
    rng: Option<RngState>,
    optimizer: Option<OptimizerHeader>,
    vocab: Vec<String>,
    /// Vocabulary rows that came from the pretrained vector file.
    pretrained_rows: Vec<usize>,
    tensors: Vec<TensorEntry>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(bytes: &[u8]) -> Vec<u8> {
    Sha256::digest(bytes).to_vec()
}

fn encode_tensor<T: Scalar>(t: &Tensor2D<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.len() * T::BYTES);
    for &v in t.as_slice() {
        v.write_le(&mut out);
    }
    out
}

pub fn to_bytes<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let model = &ckpt.model;
    let mut named: Vec<(String, &Tensor2D<T>)> = vec![(EMBEDDINGS.to_string(), model.vocab.embeddings())];
    for p in model.params() {
        named.push((p.name().to_string(), &p.value));
    }
    if let Some(opt) = &ckpt.optimizer {
        for (p, acc) in model.params().iter().zip(&opt.mean_square) {
            named.push((format!("{OPT_PREFIX}{}", p.name()), acc));
        }
    }
    let blocks: Vec<Vec<u8>> = named.iter().map(|(_, t)| encode_tensor(t)).collect();
    let header = Header {
        dtype: T::DTYPE.to_string(),
        model: model.config.clone(),
        strategy: ckpt.strategy,
        epoch: ckpt.epoch,
        step: ckpt.step,
        rng: ckpt.rng.clone(),
        optimizer: ckpt.optimizer.as_ref().map(|o| OptimizerHeader {
            config: o.config.clone(),
            steps: o.steps,
        }),
        vocab: model.vocab.tokens().to_vec(),
        pretrained_rows: (0..model.vocab.len()).filter(|&i| model.vocab.is_pretrained(i)).collect(),
        tensors: named
            .iter()
            .zip(&blocks)
            .map(|((name, t), b)| TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
                sha256: hex(&sha256(b)),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Data(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for b in &blocks {
        out.extend_from_slice(b);
    }
    let digest = sha256(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Integrity(format!("truncated while reading {what}"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < MAGIC.len() + 4 + 8 + 32 || &bytes[..8] != MAGIC {
        return Err(Error::Integrity("not a checkpoint (bad magic or too short)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if sha256(body) != digest {
        return Err(Error::Integrity("checksum mismatch (file truncated or corrupt)".into()));
    }
    let mut r = Reader { bytes: body, pos: 12 };
    let header_len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::Integrity(format!("bad header: {e}")))?;
    if header.dtype != T::DTYPE {
        return Err(Error::Integrity(format!(
            "checkpoint holds {} values, {} requested",
            header.dtype,
            T::DTYPE
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n = entry.rows.checked_mul(entry.cols).ok_or_else(|| Error::Integrity("tensor too large".into()))?;
        let block = r.take(n * T::BYTES, &entry.name)?;
        if hex(&sha256(block)) != entry.sha256 {
            return Err(Error::Integrity(format!("tensor {} checksum mismatch", entry.name)));
        }
        let data = block.chunks_exact(T::BYTES).map(T::read_le).collect();
        let t = Tensor2D::from_vec(entry.rows, entry.cols, data)
            .map_err(|e| Error::Integrity(format!("tensor {}: {e}", entry.name)))?;
        tensors.push((entry.name.clone(), t));
    }
    if r.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after tensor blocks".into()));
    }
    let mut by_name: std::collections::HashMap<String, Tensor2D<T>> = tensors.into_iter().collect();
    let mut take = |name: &str| {
        by_name.remove(name).ok_or_else(|| Error::Integrity(format!("missing tensor {name}")))
    };

    let mut vocab = Vocab::from_parts(header.vocab, take(EMBEDDINGS)?)?;
    vocab.mark_pretrained(&header.pretrained_rows)?;
    let mut model = SiameseModel::new(header.model, vocab)?;
    for p in model.params_mut() {
        let t = take(p.name())?;
        p.assign(&t).map_err(|e| Error::Integrity(format!("{}: {e}", p.name())))?;
    }
    let optimizer = match header.optimizer {
        Some(oh) => {
            let mut acc = Vec::new();
            for p in model.params() {
                acc.push(take(&format!("{OPT_PREFIX}{}", p.name()))?);
            }
            Some(RmspropState {
                config: oh.config,
                mean_square: acc,
                steps: oh.steps,
            })
        }
        None => None,
    };
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Integrity(format!("unexpected tensor {extra}")));
    }
    Ok(Checkpoint {
        model,
        strategy: header.strategy,
        optimizer,
        epoch: header.epoch,
        step: header.step,
        rng: header.rng,
    })
}

/// Reads the scalar type named in a checkpoint header without loading tensors.
pub fn checkpoint_dtype(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..8] != MAGIC {
        return Err(Error::Integrity("not a checkpoint (bad magic or too short)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut r = Reader { bytes: &bytes, pos: 12 };
    let header_len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes")) as usize;
    let header: serde_json::Value = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::Integrity(format!("bad header: {e}")))?;
    header["dtype"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::Integrity("header has no dtype".into()))
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(ckpt)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

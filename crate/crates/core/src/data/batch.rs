//! Padded, masked mini-batches.

use crate::matcher::Label;
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::snli::NliExample;
use super::strategy::{apply_input_strategy, InputStrategy};
use super::vocab::{Vocab, PAD};

/// One side (premise or hypothesis) of a batch: `B × width` indices, padded with [`PAD`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSequences {
    pub indices: Vec<usize>,
    pub width: usize,
    pub lengths: Vec<usize>,
}

impl PaddedSequences {
    pub fn from_sequences(seqs: &[Vec<usize>]) -> Self {
        let width = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut indices = vec![PAD; seqs.len() * width];
        for (b, s) in seqs.iter().enumerate() {
            indices[b * width..b * width + s.len()].copy_from_slice(s);
        }
        PaddedSequences {
            indices,
            width,
            lengths: seqs.iter().map(Vec::len).collect(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.indices[b * self.width..(b + 1) * self.width]
    }

    pub fn mask(&self, b: usize) -> Vec<bool> {
        (0..self.width).map(|t| t < self.lengths[b]).collect()
    }

    pub fn unpadded(&self, b: usize) -> &[usize] {
        &self.row(b)[..self.lengths[b]]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub premise: PaddedSequences,
    pub hypothesis: PaddedSequences,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Assembles a batch from already-indexed pairs.
    pub fn from_indexed(pairs: &[(Vec<usize>, Vec<usize>, Label)]) -> Self {
        let p: Vec<Vec<usize>> = pairs.iter().map(|x| x.0.clone()).collect();
        let h: Vec<Vec<usize>> = pairs.iter().map(|x| x.1.clone()).collect();
        Batch {
            premise: PaddedSequences::from_sequences(&p),
            hypothesis: PaddedSequences::from_sequences(&h),
            labels: pairs.iter().map(|x| x.2).collect(),
        }
    }
}

/// Applies `strategy` and maps tokens to vocabulary indices.
pub fn index_examples<T: Scalar>(
    examples: &[NliExample],
    vocab: &Vocab<T>,
    strategy: InputStrategy,
) -> Vec<(Vec<usize>, Vec<usize>, Label)> {
    examples
        .iter()
        .map(|ex| {
            let ex = apply_input_strategy(ex, strategy);
            (vocab.encode(&ex.premise), vocab.encode(&ex.hypothesis), ex.label)
        })
        .collect()
}

/// Shuffles with `rng` (pass `None` to keep order) and cuts into padded batches.
/// The final short batch is kept.
pub fn batches_from_indexed(
    indexed: &[(Vec<usize>, Vec<usize>, Label)],
    batch_size: usize,
    rng: Option<&mut Rng>,
) -> Vec<Batch> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..indexed.len()).collect();
    if let Some(rng) = rng {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let pairs: Vec<_> = chunk.iter().map(|&i| indexed[i].clone()).collect();
            Batch::from_indexed(&pairs)
        })
        .collect()
}

pub fn make_batches<T: Scalar>(
    examples: &[NliExample],
    batch_size: usize,
    rng: &mut Rng,
    strategy: InputStrategy,
    vocab: &Vocab<T>,
) -> Vec<Batch> {
    batches_from_indexed(&index_examples(examples, vocab, strategy), batch_size, Some(rng))
}

//! SNLI ingestion, tokenization, embeddings, input strategies and batching.

mod batch;
mod snli;
mod strategy;
mod tokenize;
mod vocab;

pub use batch::{batches_from_indexed, index_examples, make_batches, Batch, PaddedSequences};
pub use snli::{load_snli, parse_snli, NliExample, SnliParse, TokenSource};
pub use strategy::{apply_input_strategy, differentiate_inputs, InputStrategy};
pub use tokenize::{tokenize, tokenize_binary_parse};
pub use vocab::{
    load_embeddings, load_embeddings_file, random_embeddings, Vocab, OOV_SCALE, PAD, PAD_TOKEN, UNK, UNK_TOKEN,
};

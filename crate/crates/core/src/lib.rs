//! Sentence-encoding textual entailment.
//!
//! Premise and hypothesis are encoded by one shared biLSTM. A first-stage
//! mean-pooled vector scores the sentence's own tokens (inner attention) to
//! produce the final representation. The two representations are matched by
//! concatenation, element-wise product and difference, then classified as
//! entailment, contradiction or neutral.
//!
//! All numeric code is generic over [`Scalar`]; `f64` is the verification
//! precision and the default aliases below use it.
#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod matcher;
pub mod model;
pub mod optim;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::{InputStrategy, NliExample};
pub use error::{Error, Result};
pub use matcher::Label;
pub use model::{ModelConfig, SiameseModel};
pub use param::{Parameter, Parameterized};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor2D;
pub use train::{EpochRecord, Evaluation, TrainConfig};

pub type Tensor = Tensor2D<f64>;
pub type Tensor32 = Tensor2D<f32>;
pub type Model = SiameseModel<f64>;
pub type Model32 = SiameseModel<f32>;
pub type Vocabulary = data::Vocab<f64>;
pub type Vocabulary32 = data::Vocab<f32>;
pub type ModelCheckpoint = Checkpoint<f64>;

//! A single GRU encoder-decoder that translates both ways between two or
//! more languages, trained with a summed dual-direction loss.
//!
//! Everything computes through [`numcore`], a small dense-tensor library
//! with tape-based reverse-mode differentiation.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numcore;
pub mod training;

pub use corpus::{LanguageId, ParallelCorpus, Vocabulary};
pub use error::{Error, PersistError, Result};
pub use evaluation::{AttentionMap, BleuReport};
pub use model::UniversalModel;
pub use numcore::{Real, Rng, Tape, Tensor};
pub use training::{Checkpoint, TrainConfig};

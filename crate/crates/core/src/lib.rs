//! Few-shot named entity recognition with large label interpretation corpora.
//!
//! The crate covers corpus I/O and manipulation ([`corpus`]), building a
//! distantly supervised corpus from entity-linked text ([`litset`]), the
//! few-shot split and support-set protocol ([`fewshot`]), a bi-encoder tagger
//! ([`biencoder`]) with its training loops ([`trainer`]), and evaluation
//! ([`eval`]).

pub mod biencoder;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod litset;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use biencoder::{BiEncoder, EncoderConfig, ScoringHead};
pub use corpus::{Corpus, EntitySpan, Partition, Sentence, TypeInventory};
pub use error::{Error, Result};
pub use eval::{GridCell, RunResult};
pub use fewshot::{SplitSpec, SupportSet, VerbalizationScheme};
pub use litset::{KbEntityRecord, SamplingConfig};
pub use trainer::{TrainConfig, TrainLog};

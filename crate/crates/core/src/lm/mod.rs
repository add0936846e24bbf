//! Word-level multi-layer LSTM language model.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod score;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{LmConfig, SequenceMode};
pub use model::{Batch, DropoutMasks, Lstm, State};
pub use params::{Float, Params};
pub use score::{perplexity, sentence_log_probs};
pub use train::{train, train_with, EpochReport};

//! Controlled-rearing experiments on relative-clause attachment preferences
//! of recurrent language models.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod lang;
pub mod lm;
pub mod stats;
pub mod stimuli;
pub mod synth;

pub use error::{Error, Result};

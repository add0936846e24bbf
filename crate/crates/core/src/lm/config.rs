use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How training data is cut into sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    /// One sentence per sequence, state reset per sentence. Used for the
    /// short sentences of the synthetic language.
    Sentence,
    /// Sentences concatenated into one stream, cut into `bptt_len` windows
    /// with state carried across windows within an epoch.
    Stream,
}

impl SequenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceMode::Sentence => "sentence",
            SequenceMode::Stream => "stream",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            SequenceMode::Sentence => 0,
            SequenceMode::Stream => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SequenceMode::Sentence),
            1 => Some(SequenceMode::Stream),
            _ => None,
        }
    }
}

impl fmt::Display for SequenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(SequenceMode::Sentence),
            "stream" => Ok(SequenceMode::Stream),
            other => Err(Error::Config(format!("unknown sequence mode `{other}`"))),
        }
    }
}

/// Architecture and optimiser settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub layers: usize,
    pub embed_units: usize,
    pub hidden_units: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub epochs: usize,
    pub bptt_len: usize,
    /// Global gradient-norm threshold.
    pub grad_clip: f64,
    pub seed: u64,
    pub mode: SequenceMode,
    /// Learning rate is divided by this when validation perplexity does not improve.
    pub anneal: f64,
    /// Weights start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl LmConfig {
    /// 2 x 650 units, batch 128, dropout 0.2, learning rate 20, 40 epochs.
    pub fn paper() -> Self {
        LmConfig {
            layers: 2,
            embed_units: 650,
            hidden_units: 650,
            dropout: 0.2,
            batch_size: 128,
            initial_lr: 20.0,
            epochs: 40,
            bptt_len: 35,
            grad_clip: 0.25,
            seed: 1111,
            mode: SequenceMode::Stream,
            anneal: 4.0,
            init_range: 0.1,
        }
    }

    /// The paper-scale architecture shrunk to 2 x 128 units with a short
    /// schedule, for single-machine runs.
    pub fn desk() -> Self {
        LmConfig {
            embed_units: 128,
            hidden_units: 128,
            epochs: 4,
            ..LmConfig::paper()
        }
    }

    /// Desk settings for the synthetic language (sentence-level sequences).
    pub fn desk_synthetic() -> Self {
        LmConfig {
            mode: SequenceMode::Sentence,
            ..LmConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("embed_units", self.embed_units),
            ("hidden_units", self.hidden_units),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("bptt_len", self.bptt_len),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        for (name, v) in [
            ("initial_lr", self.initial_lr),
            ("grad_clip", self.grad_clip),
            ("init_range", self.init_range),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.anneal >= 1.0) {
            return Err(Error::Config(format!("anneal must be >= 1, got {}", self.anneal)));
        }
        Ok(())
    }
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig::desk()
    }
}

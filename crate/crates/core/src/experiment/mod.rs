//! End-to-end experiments: configuration, synthetic sweeps, natural-language
//! replication and report emission.

pub mod config;
pub mod replicate;
pub mod report;
pub mod sample;
pub mod sweep;

pub use config::{parse_kv, parse_overrides, ExperimentConfig, ExperimentKind, Profile};
pub use replicate::{load_corpus, load_stimuli, run_experiment, run_replication};
pub use report::{emit_figures, CellReport, ExperimentReport, PerplexityReport, Provenance, RunOutcome, RunStatus};
pub use sample::sample_corpus;
pub use sweep::{run_cell, run_sweep};

//! Synthetic-language sweeps: generate, train, evaluate and test every
//! (grid value, seed) cell, with completed cells cached on disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{hex, ExperimentConfig, ExperimentKind};
use super::report::{CellReport, ExperimentReport, Provenance, RunOutcome, RunStatus};
use crate::corpus::{build_vocab, encode, Vocab};
use crate::error::{Error, Result};
use crate::eval::{load_results, save_results, DeltaRecord, Evaluator};
use crate::lm::{train, Checkpoint};
use crate::stimuli::StimulusPair;
use crate::synth::{generate_corpus, generate_test_pairs, generate_test_pairs_excluding, Lexicon};

const DONE: &str = "DONE";

/// A trained model with its vocabulary, fresh or from the cache.
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub vocab: Vocab,
    pub cached: bool,
    /// Wall-clock training time, remembered across cache hits.
    pub seconds: f64,
}

/// Train through `produce` unless `cache/<key>/` already holds a finished
/// model. The cache entry is written last-file-first so an interrupted run
/// never leaves a `DONE` marker behind.
pub(crate) fn cached_model<F>(cache: Option<&Path>, key: &str, produce: F) -> Result<TrainedModel>
where
    F: FnOnce() -> Result<(Checkpoint, Vocab)>,
{
    let dir = cache.map(|c| c.join(key));
    if let Some(dir) = &dir {
        if dir.join(DONE).exists() {
            let vocab = Vocab::load(&dir.join("vocab.txt"))?;
            let checkpoint = Checkpoint::load(&dir.join("model.almc"))?;
            checkpoint.ensure_vocab(&vocab)?;
            let seconds = fs::read_to_string(dir.join("seconds.txt"))
                .ok()
                .and_then(|s| s.trim().parse().ok())
                .unwrap_or(0.0);
            log::info!("reusing cached model {}", dir.display());
            return Ok(TrainedModel {
                checkpoint,
                vocab,
                cached: true,
                seconds,
            });
        }
    }
    let start = Instant::now();
    let (checkpoint, vocab) = produce()?;
    let seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = &dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        vocab.save(&dir.join("vocab.txt"))?;
        checkpoint.save(&dir.join("model.almc"))?;
        let history: String = checkpoint.valid_history.iter().map(|p| format!("{p}\n")).collect();
        fs::write(dir.join("history.txt"), history).map_err(|e| Error::io(dir, e))?;
        fs::write(dir.join("seconds.txt"), format!("{seconds}\n")).map_err(|e| Error::io(dir, e))?;
        fs::write(dir.join(DONE), key).map_err(|e| Error::io(dir, e))?;
    }
    Ok(TrainedModel {
        checkpoint,
        vocab,
        cached: false,
        seconds,
    })
}

/// Evaluate `pairs` with a model, reusing `cache/<key>/<name>` when present.
pub(crate) fn cached_deltas(
    cache: Option<&Path>,
    key: &str,
    name: &str,
    model: &TrainedModel,
    pairs: &[StimulusPair],
) -> Result<Vec<DeltaRecord>> {
    let path = cache.map(|c| c.join(key).join(name));
    if let Some(p) = &path {
        if p.exists() {
            return load_results(p);
        }
    }
    let deltas = Evaluator::new(&model.checkpoint, &model.vocab)?.attachment_deltas(pairs)?;
    if let Some(p) = &path {
        save_results(&deltas, p)?;
    }
    Ok(deltas)
}

pub(crate) fn digest(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
}

/// Label of a grid cell in reports.
pub fn cell_label(kind: ExperimentKind, grid_value: f64) -> String {
    match kind {
        ExperimentKind::SyntheticDose => format!("rc={grid_value}"),
        _ => format!("high={grid_value}"),
    }
}

/// Everything that determines a cell's model and results. Output paths and
/// worker counts are left out, as are grid values and seeds of other cells,
/// so a cell gets the same key alone or inside any sweep.
pub fn cell_key(config: &ExperimentConfig, lexicon: &Lexicon, grid_value: f64, seed: u64) -> String {
    let synth = config.synth_config(grid_value, seed);
    let valid = config.valid_synth_config(&synth);
    let lm = crate::lm::LmConfig {
        seed,
        ..config.lm.clone()
    };
    let mut text = format!(
        "synth={synth:?}\nvalid={valid:?}\nlexicon={}\nlm={lm:?}\nmax_vocab={}\ntest={}:{}\nversion={}\n",
        digest(&lexicon.to_text()),
        config.max_vocab,
        config.test_seed,
        config.test_pairs,
        env!("CARGO_PKG_VERSION"),
    );
    if config.test_holdout {
        text.push_str("holdout\n");
    }
    digest(&text)
}

pub fn load_lexicon(config: &ExperimentConfig) -> Result<Lexicon> {
    match &config.lexicon {
        Some(p) => Lexicon::load(p),
        None => Ok(Lexicon::default()),
    }
}

/// The shared test pairs of every cell in a sweep (without `test_holdout`).
pub fn sweep_test_pairs(config: &ExperimentConfig, lexicon: &Lexicon) -> Result<Vec<StimulusPair>> {
    generate_test_pairs(&mut ChaCha8Rng::seed_from_u64(config.test_seed), lexicon, config.test_pairs)
}

/// Train and evaluate one (grid value, seed) cell.
pub fn run_cell(
    config: &ExperimentConfig,
    lexicon: &Lexicon,
    pairs: &[StimulusPair],
    grid_value: f64,
    seed: u64,
) -> Result<RunOutcome> {
    let key = cell_key(config, lexicon, grid_value, seed);
    let cache = config.cache_dir.as_deref();
    let model = cached_model(cache, &key, || {
        let synth = config.synth_config(grid_value, seed);
        let train_corpus = generate_corpus(&synth, lexicon)?;
        let valid_corpus = generate_corpus(&config.valid_synth_config(&synth), lexicon)?;
        let tokens = train_corpus.token_lists();
        let vocab = build_vocab(&tokens, config.max_vocab)?;
        let lm = crate::lm::LmConfig {
            seed,
            ..config.lm.clone()
        };
        log::info!("training cell {} seed {seed}", cell_label(config.kind, grid_value));
        let checkpoint = train(&encode(&tokens, &vocab), &encode(&valid_corpus.token_lists(), &vocab), vocab.len(), &lm)?;
        Ok((checkpoint, vocab))
    })?;
    let held_out;
    let pairs = if config.test_holdout {
        let train_corpus = generate_corpus(&config.synth_config(grid_value, seed), lexicon)?;
        held_out = generate_test_pairs_excluding(
            &mut ChaCha8Rng::seed_from_u64(config.test_seed),
            lexicon,
            config.test_pairs,
            Some(&train_corpus),
        )?;
        &held_out[..]
    } else {
        pairs
    };
    let deltas = cached_deltas(cache, &key, "results.csv", &model, pairs)?;
    Ok(RunOutcome {
        seed,
        status: if model.cached { RunStatus::Cached } else { RunStatus::Trained },
        perplexity: model.checkpoint.best_perplexity(),
        deltas,
        seconds: model.seconds,
    })
}

/// Run every cell of a synthetic sweep. A failing cell is recorded in the
/// report and the remaining cells still run.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if !config.kind.is_synthetic() {
        return Err(Error::Config(format!("`{}` is not a synthetic sweep; use replicate", config.kind)));
    }
    let lexicon = load_lexicon(config)?;
    let pairs = sweep_test_pairs(config, &lexicon)?;
    let jobs: Vec<(f64, u64)> = config
        .grid
        .iter()
        .flat_map(|&g| config.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, seed)| {
                run_cell(config, &lexicon, &pairs, g, seed).unwrap_or_else(|e| {
                    log::error!("cell {} seed {seed} failed: {e}", cell_label(config.kind, g));
                    RunOutcome {
                        seed,
                        status: RunStatus::Failed(e.to_string()),
                        perplexity: None,
                        deltas: vec![],
                        seconds: 0.0,
                    }
                })
            })
            .collect()
    });
    let mut outcomes = outcomes.into_iter();
    let cells = config
        .grid
        .iter()
        .map(|&g| {
            let runs: Vec<RunOutcome> = outcomes.by_ref().take(config.seeds.len()).collect();
            CellReport::assemble(cell_label(config.kind, g), Some(g), runs, config.bonferroni_m, config.prior_scale)
        })
        .collect();
    Ok(ExperimentReport {
        kind: config.kind,
        profile: config.profile,
        provenance: Provenance::of(config),
        cells,
    })
}

/// Default cache location under the output directory.
pub fn default_cache_dir(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("cache")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn tiny(cache: &Path) -> ExperimentConfig {
        let mut m = BTreeMap::new();
        for (k, v) in [
            ("kind", "synthetic-mixture"),
            ("grid", "0,1"),
            ("seeds", "1,2"),
            ("corpus_size", "300"),
            ("test_pairs", "20"),
            ("layers", "1"),
            ("embed_units", "8"),
            ("hidden_units", "8"),
            ("batch_size", "16"),
            ("epochs", "1"),
            ("workers", "2"),
        ] {
            m.insert(k.to_string(), v.to_string());
        }
        m.insert("cache_dir".into(), cache.display().to_string());
        ExperimentConfig::from_map(&m).unwrap()
    }

    #[test]
    fn sweep_is_cached_and_cells_are_independent() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny(dir.path());
        let first = run_sweep(&config).unwrap();
        assert_eq!(first.cells.len(), 2);
        for c in &first.cells {
            assert_eq!(c.runs.len(), 2);
            assert!(c.runs.iter().all(|r| r.status == RunStatus::Trained));
            assert_eq!(c.deltas().count(), 2 * 20);
        }
        let second = run_sweep(&config).unwrap();
        for (a, b) in first.cells.iter().zip(&second.cells) {
            assert!(b.runs.iter().all(|r| r.status == RunStatus::Cached));
            assert_eq!(a.deltas().collect::<Vec<_>>(), b.deltas().collect::<Vec<_>>());
        }

        // One cell alone, without a cache, matches the same cell in the sweep.
        let mut alone = config.clone();
        alone.grid = vec![1.0];
        alone.seeds = vec![2];
        alone.cache_dir = None;
        let single = run_sweep(&alone).unwrap();
        assert_eq!(single.cells[0].runs[0].deltas, first.cells[1].runs[1].deltas);
        assert_eq!(single.cells[0].runs[0].perplexity, first.cells[1].runs[1].perplexity);
    }

    #[test]
    fn failing_cell_does_not_stop_the_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny(dir.path());
        config.grid = vec![0.0, 1.0];
        config.seeds = vec![1];
        // Plant a corrupt finished cache entry for the first cell.
        let lex = Lexicon::default();
        let bad = dir.path().join(cell_key(&config, &lex, 0.0, 1));
        fs::create_dir_all(&bad).unwrap();
        fs::write(bad.join(DONE), "").unwrap();
        fs::write(bad.join("vocab.txt"), "<unk>\n<eos>\nx\n").unwrap();
        fs::write(bad.join("model.almc"), b"garbage").unwrap();
        let report = run_sweep(&config).unwrap();
        assert!(matches!(report.cells[0].runs[0].status, RunStatus::Failed(_)));
        assert_eq!(report.cells[1].runs[0].status, RunStatus::Trained);
        assert_eq!(report.failures().len(), 1);
    }

    #[test]
    fn keys_change_with_relevant_settings_only() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny(dir.path());
        let lex = Lexicon::default();
        let k = cell_key(&config, &lex, 0.5, 1);
        let mut other = config.clone();
        other.workers = 7;
        other.out_dir = "elsewhere".into();
        other.grid = vec![0.5];
        assert_eq!(cell_key(&other, &lex, 0.5, 1), k);
        other.lm.epochs = 2;
        assert_ne!(cell_key(&other, &lex, 0.5, 1), k);
        assert_ne!(cell_key(&config, &lex, 0.5, 2), k);
    }

    #[test]
    fn holdout_pairs_avoid_each_cells_training_rcs() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny(dir.path());
        config.grid = vec![1.0];
        config.seeds = vec![1];
        let lex = Lexicon::default();
        let shared = cell_key(&config, &lex, 1.0, 1);
        config.test_holdout = true;
        assert_ne!(cell_key(&config, &lex, 1.0, 1), shared);

        let report = run_sweep(&config).unwrap();
        let train = generate_corpus(&config.synth_config(1.0, 1), &lex).unwrap();
        let prefixes: std::collections::HashSet<String> = train
            .sentences
            .iter()
            .filter_map(|s| s.rc.map(|rc| s.tokens[..=rc.rc_aux].join(" ")))
            .collect();
        assert!(!prefixes.is_empty());
        let pairs = sweep_test_pairs(&config, &lex).unwrap();
        assert_eq!(report.cells[0].deltas().count(), pairs.len());
        let held = generate_test_pairs_excluding(&mut ChaCha8Rng::seed_from_u64(config.test_seed), &lex, 20, Some(&train))
            .unwrap();
        for p in &held {
            assert!(!prefixes.contains(&p.high_agree.join(" ")));
            assert!(!prefixes.contains(&p.low_agree.join(" ")));
        }
        let ids: Vec<&str> = report.cells[0].deltas().map(|d| d.pair_id.as_str()).collect();
        let want: Vec<&str> = held.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, want);
    }
}

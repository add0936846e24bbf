//! Natural-language replication: evaluate trained (or loaded) models on the
//! attachment item sets and test the per-item deltas.

use std::path::Path;

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{CellReport, ExperimentReport, Provenance, RunOutcome, RunStatus};
use super::sample::sample_corpus;
use super::sweep::{cached_deltas, cached_model, digest, TrainedModel};
use crate::corpus::{build_vocab, encode, read_tokenized, split_corpus, Vocab};
use crate::error::{Error, Result};
use crate::lang::Language;
use crate::lm::{train, Checkpoint, LmConfig};
use crate::stimuli::{
    default_blocked_templates, default_items, default_nouns, default_templates, expand_attachment_templates,
    expand_blocked_templates, load_stimulus_file, write_stimuli, StimulusPair,
};

/// Token count of the procedurally generated `sample-en` / `sample-es` corpora.
pub const SAMPLE_TOKENS: usize = 1_000_000;

/// Resolve a stimulus spec: a file path or one of the bundled sets.
///
/// - `default-en`, `default-es`: the 24-item sets
/// - `blocked-en`: each blocked template with one noun pair (160 pairs)
/// - `blocked-en-full`, `extended-en`, `extended-es`: full template expansions
pub fn load_stimuli(spec: &str) -> Result<Vec<StimulusPair>> {
    let pairs = match spec {
        "default-en" => default_items(Language::English),
        "default-es" => default_items(Language::Spanish),
        "blocked-en" => {
            let nouns = default_nouns(Language::English);
            let mut out = Vec::new();
            for (i, t) in default_blocked_templates().iter().enumerate() {
                let two = [nouns[i % nouns.len()].clone(), nouns[(i + 1) % nouns.len()].clone()];
                out.extend(expand_blocked_templates(std::slice::from_ref(t), &two, Language::English)?);
            }
            out
        }
        "blocked-en-full" => expand_blocked_templates(
            &default_blocked_templates(),
            &default_nouns(Language::English),
            Language::English,
        )?,
        "extended-en" | "extended-es" => {
            let lang = if spec.ends_with("en") { Language::English } else { Language::Spanish };
            expand_attachment_templates(&default_templates(lang), &default_nouns(lang), lang)?
        }
        path => load_stimulus_file(Path::new(path))?,
    };
    if pairs.is_empty() {
        return Err(Error::Input(format!("stimulus set `{spec}` has no pairs")));
    }
    Ok(pairs)
}

/// Resolve a corpus spec: a tokenized file, or `sample-en` / `sample-es`.
pub fn load_corpus(spec: &Path, seed: u64) -> Result<Vec<Vec<String>>> {
    let corpus = match spec.to_str() {
        Some("sample-en") => sample_corpus(Language::English, SAMPLE_TOKENS, seed)?,
        Some("sample-es") => sample_corpus(Language::Spanish, SAMPLE_TOKENS, seed)?,
        _ => read_tokenized(spec)?,
    };
    if corpus.is_empty() {
        return Err(Error::Input(format!("corpus {} is empty", spec.display())));
    }
    Ok(corpus)
}

fn stimuli_digest(pairs: &[StimulusPair]) -> String {
    let mut buf = Vec::new();
    write_stimuli(pairs, &mut buf).expect("writing to memory cannot fail");
    digest(&String::from_utf8_lossy(&buf))
}

/// Models to evaluate: the configured checkpoints with their vocabulary, or
/// one model per seed trained on the configured corpus.
fn models(config: &ExperimentConfig) -> Result<Vec<(Option<String>, TrainedModel)>> {
    if !config.checkpoints.is_empty() {
        let vocab_path = config
            .vocab
            .as_ref()
            .ok_or_else(|| Error::Config("checkpoints need a `vocab` file".into()))?;
        let vocab = Vocab::load(vocab_path)?;
        let mut out = Vec::new();
        for p in &config.checkpoints {
            let checkpoint = Checkpoint::load(p)?;
            checkpoint
                .ensure_vocab(&vocab)
                .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            out.push((
                None,
                TrainedModel {
                    checkpoint,
                    vocab: vocab.clone(),
                    cached: true,
                    seconds: 0.0,
                },
            ));
        }
        let mut seeds: Vec<u64> = out.iter().map(|(_, m)| m.checkpoint.config.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != out.len() {
            return Err(Error::Config("two checkpoints were trained with the same seed".into()));
        }
        return Ok(out);
    }
    let spec = config
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Config("replication needs `checkpoints` or a training `corpus`".into()))?;
    let corpus = load_corpus(spec, config.split.seed)?;
    let corpus_digest = digest(&corpus.iter().map(|s| s.join(" ") + "\n").collect::<String>());
    let (train_part, valid_part, _test) = split_corpus(&corpus, &config.split)?;
    if valid_part.is_empty() {
        return Err(Error::Config("the split leaves no validation data".into()));
    }
    let mut out = Vec::new();
    for &seed in &config.seeds {
        let lm = LmConfig {
            seed,
            ..config.lm.clone()
        };
        let key = digest(&format!(
            "corpus={corpus_digest}\nsplit={:?}\nlm={lm:?}\nmax_vocab={}\nversion={}\n",
            config.split,
            config.max_vocab,
            env!("CARGO_PKG_VERSION")
        ));
        let model = cached_model(config.cache_dir.as_deref(), &key, || {
            let vocab = build_vocab(&train_part, config.max_vocab)?;
            log::info!("training on {} (seed {seed}, {} types)", spec.display(), vocab.len());
            let checkpoint = train(&encode(&train_part, &vocab), &encode(&valid_part, &vocab), vocab.len(), &lm)?;
            Ok((checkpoint, vocab))
        })?;
        out.push((Some(key), model));
    }
    Ok(out)
}

/// Evaluate every model on every stimulus set. One cell per set; one run per
/// model. A vocabulary mismatch between a checkpoint and the supplied
/// vocabulary aborts the whole replication.
pub fn run_replication(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.kind.is_synthetic() {
        return Err(Error::Config(format!("`{}` is a synthetic sweep; use sweep", config.kind)));
    }
    if config.stimuli.is_empty() {
        return Err(Error::Config("no stimulus sets configured".into()));
    }
    let sets: Vec<(String, Vec<StimulusPair>)> = config
        .stimuli
        .iter()
        .map(|s| Ok((s.clone(), load_stimuli(s)?)))
        .collect::<Result<_>>()?;
    let models = models(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;

    let mut cells = Vec::new();
    for (label, pairs) in &sets {
        let name = format!("deltas-{}.csv", stimuli_digest(pairs));
        let mut runs = Vec::new();
        for (key, model) in &models {
            let seed = model.checkpoint.config.seed;
            let cache = key.as_ref().and(config.cache_dir.as_deref());
            let deltas = pool.install(|| cached_deltas(cache, key.as_deref().unwrap_or(""), &name, model, pairs))?;
            runs.push(RunOutcome {
                seed,
                status: if model.cached { RunStatus::Cached } else { RunStatus::Trained },
                perplexity: model.checkpoint.best_perplexity(),
                deltas,
                seconds: model.seconds,
            });
        }
        cells.push(CellReport::assemble(
            label.clone(),
            None,
            runs,
            config.bonferroni_m,
            config.prior_scale,
        ));
    }
    Ok(ExperimentReport {
        kind: config.kind,
        profile: config.profile,
        provenance: Provenance::of(config),
        cells,
    })
}

/// Sweep or replication, chosen by the config's kind.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.kind {
        ExperimentKind::SyntheticDose | ExperimentKind::SyntheticMixture => super::sweep::run_sweep(config),
        _ => run_replication(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::fs;

    #[test]
    fn bundled_sets() {
        assert_eq!(load_stimuli("default-en").unwrap().len(), 24);
        assert_eq!(load_stimuli("default-es").unwrap().len(), 24);
        let blocked = load_stimuli("blocked-en").unwrap();
        assert_eq!(blocked.len(), 40 * 4);
        assert!(load_stimuli("/nonexistent/file.tsv").is_err());
    }

    #[test]
    fn empty_stimulus_file_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.tsv");
        write_stimuli(&[], &mut fs::File::create(&p).unwrap()).unwrap();
        assert!(matches!(load_stimuli(p.to_str().unwrap()), Err(Error::Input(_))));
    }

    fn config(dir: &Path, extra: &[(&str, String)]) -> ExperimentConfig {
        let mut m = BTreeMap::new();
        m.insert("kind".to_string(), "replication".to_string());
        m.insert("stimuli".to_string(), "default-en".to_string());
        for (k, v) in extra {
            m.insert(k.to_string(), v.clone());
        }
        m.insert("cache_dir".to_string(), dir.join("cache").display().to_string());
        ExperimentConfig::from_map(&m).unwrap()
    }

    #[test]
    fn checkpoints_with_a_foreign_vocabulary_abort() {
        let dir = tempfile::tempdir().unwrap();
        let corpus: Vec<Vec<String>> = sample_corpus(Language::English, 3_000, 1).unwrap();
        let vocab = build_vocab(&corpus, 1000).unwrap();
        let lm = LmConfig {
            layers: 1,
            embed_units: 4,
            hidden_units: 4,
            epochs: 1,
            batch_size: 8,
            ..LmConfig::desk()
        };
        let enc = encode(&corpus, &vocab);
        let ck = train(&enc, &enc, vocab.len(), &lm).unwrap();
        let ck_path = dir.path().join("m.almc");
        ck.save(&ck_path).unwrap();
        let other = dir.path().join("other.txt");
        Vocab::from_words(["a", "b"]).unwrap().save(&other).unwrap();
        let good_vocab = dir.path().join("vocab.txt");
        vocab.save(&good_vocab).unwrap();

        let c = config(
            dir.path(),
            &[
                ("checkpoints", ck_path.display().to_string()),
                ("vocab", other.display().to_string()),
            ],
        );
        assert!(matches!(run_replication(&c), Err(Error::Data(_))));

        let c = config(
            dir.path(),
            &[
                ("checkpoints", ck_path.display().to_string()),
                ("vocab", good_vocab.display().to_string()),
            ],
        );
        let r = run_replication(&c).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].deltas().count(), 24);
    }

    #[test]
    fn replication_needs_models() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_replication(&config(dir.path(), &[])), Err(Error::Config(_))));
    }
}

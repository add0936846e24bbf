use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rclab::corpus::{build_vocab, encode, read_tokenized, write_tokenized, Vocab};
use rclab::eval::{load_results, save_results, Evaluator};
use rclab::experiment::report::item_means;
use rclab::experiment::sweep::default_cache_dir;
use rclab::experiment::{
    emit_figures, load_stimuli, parse_kv, parse_overrides, run_experiment, sample_corpus, ExperimentConfig,
    ExperimentReport,
};
use rclab::lang::Language;
use rclab::lm::{train_with, Checkpoint};
use rclab::stats::{save_stats, test_deltas};
use rclab::stimuli::{
    default_nouns, default_templates, expand_attachment_templates, expand_blocked_templates, load_nouns,
    load_templates, save_stimulus_file,
};
use rclab::synth::{generate_corpus, generate_test_pairs, SynthConfig};
use rclab::{Error, Result};

/// Relative-clause attachment experiments with LSTM language models.
///
/// Subcommands that take a config accept `--config FILE` followed by any
/// number of `--key value` overrides (same names as the config file keys).
#[derive(Parser)]
#[command(name = "rclab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` overrides of config keys.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    /// Load the config; `kind` defaults to `default_kind` when neither the
    /// file nor the overrides set it.
    fn load(&self, default_kind: &str) -> Result<ExperimentConfig> {
        let mut map = match &self.config {
            Some(p) => parse_kv(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p)?,
            None => BTreeMap::new(),
        };
        for (k, v) in parse_overrides(&self.overrides)? {
            map.insert(k, v);
        }
        map.entry("kind".into()).or_insert_with(|| default_kind.into());
        ExperimentConfig::from_map(&map)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (with its validation corpus and test
    /// pairs), or a procedural English/Spanish sample corpus.
    GenSynthetic {
        /// Output corpus, one tokenized sentence per line.
        #[arg(long)]
        out: PathBuf,
        /// Write the sample natural-language corpus for `en` or `es` instead.
        #[arg(long)]
        sample: Option<String>,
        /// Token count of the sample corpus.
        #[arg(long, default_value_t = 1_000_000)]
        tokens: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Build a vocabulary from a tokenized corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        max_vocab: usize,
    },
    /// Train a language model and write a checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Expand attachment templates into stimulus pairs.
    ExpandStimuli {
        /// `en` or `es`.
        #[arg(long, default_value = "en")]
        language: String,
        /// Template file; the bundled templates by default.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Noun list; the bundled list by default.
        #[arg(long)]
        nouns: Option<PathBuf>,
        /// Expand blocked-attachment templates.
        #[arg(long)]
        blocked: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute attachment deltas of a checkpoint on a stimulus set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Stimulus file or bundled set (default-en, default-es, blocked-en, ...).
        #[arg(long)]
        stimuli: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-sample t-test and JZS Bayes factor on per-item mean deltas.
    Stats {
        /// Results CSVs written by `eval`; all are pooled.
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = "experiment")]
        id: String,
        #[arg(long, default_value_t = 6)]
        bonferroni_m: usize,
        #[arg(long, default_value_t = rclab::stats::DEFAULT_PRIOR_SCALE)]
        prior_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a synthetic sweep and write its report and figures.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate natural-language models on the item sets and write a report.
    Replicate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-emit figures and tables from a saved report directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Figure directory; the report directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn language(code: &str) -> Result<Language> {
    match code {
        "en" => Ok(Language::English),
        "es" => Ok(Language::Spanish),
        other => other.parse(),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn gen_synthetic(out: &Path, sample: Option<&str>, tokens: usize, cfg: &ConfigArgs) -> Result<()> {
    let config = cfg.load("synthetic-mixture")?;
    let seed = config.seeds[0];
    if let Some(code) = sample {
        let corpus = sample_corpus(language(code)?, tokens, seed)?;
        write_tokenized(&corpus, out)?;
        println!("wrote {} sentences to {}", corpus.len(), out.display());
        return Ok(());
    }
    let lexicon = rclab::experiment::sweep::load_lexicon(&config)?;
    let mut synth = SynthConfig::new(config.corpus_size, config.rc_count, config.high_proportion, seed);
    synth.optional_p = config.optional_p;
    let corpus = generate_corpus(&synth, &lexicon)?;
    corpus.save(out, &with_suffix(out, ".ann.tsv"))?;
    let valid = generate_corpus(&config.valid_synth_config(&synth), &lexicon)?;
    valid.save(&with_suffix(out, ".valid"), &with_suffix(out, ".valid.ann.tsv"))?;
    let pairs = generate_test_pairs(&mut ChaCha8Rng::seed_from_u64(config.test_seed), &lexicon, config.test_pairs)?;
    save_stimulus_file(&pairs, &with_suffix(out, ".test.tsv"))?;
    println!(
        "wrote {} training and {} validation sentences and {} test pairs next to {}",
        corpus.len(),
        valid.len(),
        pairs.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(train: &Path, valid: &Path, vocab: &Path, out: &Path, cfg: &ConfigArgs) -> Result<()> {
    let config = cfg.load("replication")?;
    let lm = rclab::lm::LmConfig {
        seed: config.seeds[0],
        ..config.lm
    };
    let vocab = Vocab::load(vocab)?;
    let tr = encode(&read_tokenized(train)?, &vocab);
    let va = encode(&read_tokenized(valid)?, &vocab);
    let checkpoint = train_with(&tr, &va, vocab.len(), &lm, |r, _| {
        println!(
            "epoch {:>3}  lr {:<8}  train loss {:.4}  valid ppl {:.3}  ({:.0}s)",
            r.epoch, r.lr, r.train_loss, r.valid_perplexity, r.seconds
        );
    })?;
    checkpoint.save(out)?;
    println!(
        "best epoch {} (valid ppl {:.3}) saved to {}",
        checkpoint.best_epoch,
        checkpoint.best_perplexity().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn expand(language_code: &str, templates: Option<&Path>, nouns: Option<&Path>, blocked: bool, out: &Path) -> Result<()> {
    let lang = language(language_code)?;
    let templates = match (templates, blocked) {
        (Some(p), _) => load_templates(p, lang)?,
        (None, true) => rclab::stimuli::default_blocked_templates(),
        (None, false) => default_templates(lang),
    };
    let nouns = match nouns {
        Some(p) => load_nouns(p)?,
        None => default_nouns(lang),
    };
    let pairs = if blocked {
        expand_blocked_templates(&templates, &nouns, lang)?
    } else {
        expand_attachment_templates(&templates, &nouns, lang)?
    };
    save_stimulus_file(&pairs, out)?;
    println!("wrote {} pairs ({} sentences) to {}", pairs.len(), 2 * pairs.len(), out.display());
    Ok(())
}

fn eval_cmd(checkpoint: &Path, vocab: &Path, stimuli: &str, out: &Path) -> Result<()> {
    let vocab = Vocab::load(vocab)?;
    let checkpoint = Checkpoint::load(checkpoint)?;
    let pairs = load_stimuli(stimuli)?;
    let deltas = Evaluator::new(&checkpoint, &vocab)?.attachment_deltas(&pairs)?;
    save_results(&deltas, out)?;
    let s = rclab::eval::Summary::of(&deltas);
    println!(
        "{} pairs: mean delta {:.4}, LOW {}, HIGH {}, TIE {}",
        s.n, s.mean_delta, s.n_low, s.n_high, s.n_tie
    );
    Ok(())
}

fn stats_cmd(results: &[PathBuf], id: &str, m: usize, prior: f64, out: Option<&Path>) -> Result<()> {
    let mut deltas = Vec::new();
    for p in results {
        deltas.extend(load_results(p)?);
    }
    let r = test_deltas(id, &item_means(&deltas), m, prior)?;
    println!(
        "{id}: n={} mean={:.4} sd={:.4} t({})={:.4} p={:.4e} BF10={:.4} ({}), {} at alpha/{m}",
        r.ttest.n,
        r.ttest.mean,
        r.ttest.sd,
        r.ttest.df,
        r.ttest.t,
        r.ttest.p,
        r.bf10,
        r.evidence().as_str(),
        r.decision
    );
    if let Some(out) = out {
        save_stats(&[r], out)?;
    }
    Ok(())
}

fn print_report(report: &ExperimentReport) {
    println!("{} ({} profile, config {})", report.kind, report.profile, report.provenance.config_hash);
    for c in &report.cells {
        let trained = c.runs.iter().filter(|r| r.status.as_str() == "trained").count();
        let cached = c.runs.iter().filter(|r| r.status.as_str() == "cached").count();
        print!("  {:<16} runs {} (trained {trained}, cached {cached})", c.label, c.runs.len());
        if let Some(a) = &c.aggregate {
            let p = &a.pooled;
            print!(
                "  mean delta {:>8.4}  LOW {:>5}  HIGH {:>5}",
                p.mean_delta,
                p.prop_low().map_or("-".into(), |v| format!("{v:.3}")),
                p.prop_high().map_or("-".into(), |v| format!("{v:.3}"))
            );
        }
        if let Some(s) = &c.stats {
            print!("  p {:.3e}  BF10 {:.3}", s.ttest.p, s.bf10);
        }
        println!();
    }
    for (cell, seed, msg) in report.failures() {
        eprintln!("  failed: {cell} seed {seed}: {msg}");
    }
}

fn experiment(cfg: &ConfigArgs, default_kind: &str) -> Result<()> {
    let mut config = cfg.load(default_kind)?;
    if config.cache_dir.is_none() {
        config.cache_dir = Some(default_cache_dir(&config));
    }
    let report = run_experiment(&config)?;
    report.save(&config, &config.out_dir)?;
    print_report(&report);
    if report.cells.iter().any(|c| c.aggregate.is_some()) {
        emit_figures(&report, &config.out_dir)?;
    }
    println!("report written to {}", config.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { out, sample, tokens, cfg } => gen_synthetic(&out, sample.as_deref(), tokens, &cfg),
        Command::BuildVocab { corpus, out, max_vocab } => {
            let vocab = build_vocab(&read_tokenized(&corpus)?, max_vocab)?;
            vocab.save(&out)?;
            println!("{} types (hash {:016x}) written to {}", vocab.len(), vocab.hash(), out.display());
            Ok(())
        }
        Command::Train { train, valid, vocab, out, cfg } => train_cmd(&train, &valid, &vocab, &out, &cfg),
        Command::ExpandStimuli {
            language,
            templates,
            nouns,
            blocked,
            out,
        } => expand(&language, templates.as_deref(), nouns.as_deref(), blocked, &out),
        Command::Eval {
            checkpoint,
            vocab,
            stimuli,
            out,
        } => eval_cmd(&checkpoint, &vocab, &stimuli, &out),
        Command::Stats {
            results,
            id,
            bonferroni_m,
            prior_scale,
            out,
        } => stats_cmd(&results, &id, bonferroni_m, prior_scale, out.as_deref()),
        Command::Sweep { cfg } => experiment(&cfg, "synthetic-mixture"),
        Command::Replicate { cfg } => experiment(&cfg, "replication"),
        Command::Report { dir, out } => {
            let (report, _) = ExperimentReport::load(&dir)?;
            print_report(&report);
            let out = out.unwrap_or(dir);
            for p in emit_figures(&report, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

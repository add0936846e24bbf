//! Plain-text `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::SplitSpec;
use crate::error::{Error, Result};
use crate::lm::{LmConfig, SequenceMode};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// Vary the number of RC sentences (`grid` holds rc counts).
    SyntheticDose,
    /// Vary the share of HIGH attachment (`grid` holds proportions).
    SyntheticMixture,
    /// Evaluate ambiguous attachment stimuli.
    AttachmentEval,
    /// Evaluate blocked-attachment stimuli.
    BlockedEval,
    /// Train on a natural corpus (or load checkpoints) and evaluate item sets.
    Replication,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SyntheticDose => "synthetic-dose",
            ExperimentKind::SyntheticMixture => "synthetic-mixture",
            ExperimentKind::AttachmentEval => "attachment-eval",
            ExperimentKind::BlockedEval => "blocked-eval",
            ExperimentKind::Replication => "replication",
        }
    }

    pub fn is_synthetic(self) -> bool {
        matches!(self, ExperimentKind::SyntheticDose | ExperimentKind::SyntheticMixture)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "synthetic-dose" => ExperimentKind::SyntheticDose,
            "synthetic-mixture" => ExperimentKind::SyntheticMixture,
            "attachment-eval" => ExperimentKind::AttachmentEval,
            "blocked-eval" => ExperimentKind::BlockedEval,
            "replication" => ExperimentKind::Replication,
            other => return Err(Error::Config(format!("unknown experiment kind `{other}`"))),
        })
    }
}

/// Named bundle of scale-dependent defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// 2 x 128 units, 120,000-sentence corpora.
    Desk,
    /// 2 x 650 units, the published architecture.
    Paper,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

/// Everything needed to run a sweep or a replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub profile: Profile,
    /// Values of the swept variable (see [`ExperimentKind`]).
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub corpus_size: usize,
    pub rc_count: usize,
    pub high_proportion: f64,
    pub optional_p: f64,
    /// Size of the generated validation corpus.
    pub valid_size: usize,
    pub test_pairs: usize,
    pub test_seed: u64,
    /// Redraw each cell's test pairs so none matches the start of an RC
    /// sentence in that cell's training corpus.
    pub test_holdout: bool,
    pub lexicon: Option<PathBuf>,
    pub max_vocab: usize,
    /// LM settings; its `seed` is replaced per run.
    pub lm: LmConfig,
    pub workers: usize,
    pub bonferroni_m: usize,
    pub prior_scale: f64,
    pub out_dir: PathBuf,
    /// Completed runs are kept here and reused.
    pub cache_dir: Option<PathBuf>,
    /// Stimulus files, or `default-en`, `default-es`, `blocked-en`.
    pub stimuli: Vec<String>,
    pub checkpoints: Vec<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Tokenized natural corpus, one sentence per line.
    pub corpus: Option<PathBuf>,
    pub split: SplitSpec,
}

/// Every key accepted in a config file or as a `--key value` flag.
pub const KEYS: [&str; 38] = [
    "kind",
    "profile",
    "grid",
    "seeds",
    "corpus_size",
    "rc_count",
    "high_proportion",
    "optional_p",
    "valid_size",
    "test_pairs",
    "test_seed",
    "test_holdout",
    "lexicon",
    "max_vocab",
    "layers",
    "embed_units",
    "hidden_units",
    "dropout",
    "batch_size",
    "initial_lr",
    "epochs",
    "bptt_len",
    "grad_clip",
    "mode",
    "anneal",
    "init_range",
    "workers",
    "bonferroni_m",
    "prior_scale",
    "out_dir",
    "cache_dir",
    "stimuli",
    "checkpoints",
    "vocab",
    "corpus",
    "split",
    "split_seed",
    "seed",
];

impl ExperimentConfig {
    /// Defaults for a kind and profile.
    pub fn defaults(kind: ExperimentKind, profile: Profile) -> Self {
        let mut lm = match profile {
            Profile::Desk => LmConfig::desk(),
            Profile::Paper => LmConfig::paper(),
        };
        if kind.is_synthetic() {
            lm.mode = SequenceMode::Sentence;
        }
        let corpus_size = 120_000;
        ExperimentConfig {
            kind,
            profile,
            grid: match kind {
                ExperimentKind::SyntheticMixture => vec![0.0, 0.25, 0.5, 0.75, 1.0],
                ExperimentKind::SyntheticDose => vec![20.0],
                _ => vec![],
            },
            seeds: vec![1, 2, 3, 4, 5],
            corpus_size,
            rc_count: corpus_size / 10,
            high_proportion: if kind == ExperimentKind::SyntheticDose { 1.0 } else { 0.5 },
            optional_p: 0.5,
            valid_size: corpus_size / 10,
            test_pairs: 300,
            test_seed: 2020,
            test_holdout: false,
            lexicon: None,
            max_vocab: 50_000,
            lm,
            workers: 1,
            bonferroni_m: 6,
            prior_scale: crate::stats::DEFAULT_PRIOR_SCALE,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            stimuli: match kind {
                ExperimentKind::BlockedEval => vec!["blocked-en".into()],
                _ => vec!["default-en".into(), "default-es".into()],
            },
            checkpoints: vec![],
            vocab: None,
            corpus: None,
            split: SplitSpec::new(0.8, 0.1, 0.1, 0),
        }
    }

    /// Build from key/value pairs; `kind` is required, `profile` defaults to desk.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key `{k}`")));
            }
        }
        let kind: ExperimentKind = map
            .get("kind")
            .ok_or_else(|| Error::Config("config needs a `kind`".into()))?
            .parse()?;
        let profile: Profile = map.get("profile").map_or(Ok(Profile::Desk), |p| p.parse())?;
        let mut c = ExperimentConfig::defaults(kind, profile);
        if let Some(v) = map.get("corpus_size") {
            // Derived defaults follow the corpus size unless set explicitly.
            c.corpus_size = num(v, "corpus_size")?;
            c.rc_count = c.corpus_size / 10;
            c.valid_size = c.corpus_size / 10;
        }
        for (k, v) in map {
            match k.as_str() {
                "kind" | "profile" | "corpus_size" => {}
                "grid" => c.grid = list(v, "grid")?,
                "seeds" => c.seeds = list(v, "seeds")?,
                "seed" => c.seeds = vec![num(v, "seed")?],
                "rc_count" => c.rc_count = num(v, k)?,
                "high_proportion" => c.high_proportion = num(v, k)?,
                "optional_p" => c.optional_p = num(v, k)?,
                "valid_size" => c.valid_size = num(v, k)?,
                "test_pairs" => c.test_pairs = num(v, k)?,
                "test_seed" => c.test_seed = num(v, k)?,
                "test_holdout" => c.test_holdout = num(v, k)?,
                "lexicon" => c.lexicon = path(v),
                "max_vocab" => c.max_vocab = num(v, k)?,
                "layers" => c.lm.layers = num(v, k)?,
                "embed_units" => c.lm.embed_units = num(v, k)?,
                "hidden_units" => c.lm.hidden_units = num(v, k)?,
                "dropout" => c.lm.dropout = num(v, k)?,
                "batch_size" => c.lm.batch_size = num(v, k)?,
                "initial_lr" => c.lm.initial_lr = num(v, k)?,
                "epochs" => c.lm.epochs = num(v, k)?,
                "bptt_len" => c.lm.bptt_len = num(v, k)?,
                "grad_clip" => c.lm.grad_clip = num(v, k)?,
                "mode" => c.lm.mode = v.parse()?,
                "anneal" => c.lm.anneal = num(v, k)?,
                "init_range" => c.lm.init_range = num(v, k)?,
                "workers" => c.workers = num(v, k)?,
                "bonferroni_m" => c.bonferroni_m = num(v, k)?,
                "prior_scale" => c.prior_scale = num(v, k)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                "cache_dir" => c.cache_dir = path(v),
                "stimuli" => c.stimuli = list(v, k)?,
                "checkpoints" => c.checkpoints = list::<String>(v, k)?.into_iter().map(PathBuf::from).collect(),
                "vocab" => c.vocab = path(v),
                "corpus" => c.corpus = path(v),
                "split" => {
                    let f: Vec<f64> = list(v, k)?;
                    if f.len() != 3 {
                        return Err(Error::Config("split needs three fractions train,valid,test".into()));
                    }
                    c.split = SplitSpec::new(f[0], f[1], f[2], c.split.seed);
                }
                "split_seed" => c.split.seed = num(v, k)?,
                _ => unreachable!(),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Parse a config file, then apply `overrides` (later entries win).
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_kv(&text, p)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        ExperimentConfig::from_map(&map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.kind.is_synthetic() && self.grid.is_empty() {
            return Err(Error::Config("the sweep grid is empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.bonferroni_m == 0 {
            return Err(Error::Config("bonferroni_m must be at least 1".into()));
        }
        if !(self.prior_scale > 0.0) {
            return Err(Error::Config("prior_scale must be positive".into()));
        }
        if self.kind.is_synthetic() {
            for &g in &self.grid {
                self.synth_config(g, self.seeds[0]).validate()?;
            }
            if self.test_pairs == 0 || self.valid_size == 0 {
                return Err(Error::Config("test_pairs and valid_size must be at least 1".into()));
            }
        }
        self.split.validate()?;
        self.lm.validate()
    }

    /// Corpus settings of one sweep cell.
    pub fn synth_config(&self, grid_value: f64, seed: u64) -> SynthConfig {
        let mut s = SynthConfig::new(self.corpus_size, self.rc_count, self.high_proportion, seed);
        s.optional_p = self.optional_p;
        match self.kind {
            ExperimentKind::SyntheticMixture => s.high_proportion = grid_value,
            ExperimentKind::SyntheticDose => s.rc_count = grid_value.round() as usize,
            _ => {}
        }
        s
    }

    /// Settings of the validation corpus paired with a training corpus.
    pub fn valid_synth_config(&self, train: &SynthConfig) -> SynthConfig {
        let rc = (train.rc_count as f64 * self.valid_size as f64 / train.corpus_size.max(1) as f64).round() as usize;
        SynthConfig {
            corpus_size: self.valid_size,
            rc_count: rc.min(self.valid_size),
            seed: train.seed ^ 0x5eed_0000_0000_0001,
            ..train.clone()
        }
    }

    /// Canonical `key = value` text; the config hash is taken over it.
    pub fn to_kv(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let l = &self.lm;
        let mut m: Vec<(&str, String)> = vec![
            ("kind", self.kind.to_string()),
            ("profile", self.profile.to_string()),
            ("grid", join(self.grid.iter().map(f64::to_string).collect())),
            ("seeds", join(self.seeds.iter().map(u64::to_string).collect())),
            ("corpus_size", self.corpus_size.to_string()),
            ("rc_count", self.rc_count.to_string()),
            ("high_proportion", self.high_proportion.to_string()),
            ("optional_p", self.optional_p.to_string()),
            ("valid_size", self.valid_size.to_string()),
            ("test_pairs", self.test_pairs.to_string()),
            ("test_seed", self.test_seed.to_string()),
            ("test_holdout", self.test_holdout.to_string()),
            ("lexicon", opt(&self.lexicon)),
            ("max_vocab", self.max_vocab.to_string()),
            ("layers", l.layers.to_string()),
            ("embed_units", l.embed_units.to_string()),
            ("hidden_units", l.hidden_units.to_string()),
            ("dropout", l.dropout.to_string()),
            ("batch_size", l.batch_size.to_string()),
            ("initial_lr", l.initial_lr.to_string()),
            ("epochs", l.epochs.to_string()),
            ("bptt_len", l.bptt_len.to_string()),
            ("grad_clip", l.grad_clip.to_string()),
            ("mode", l.mode.to_string()),
            ("anneal", l.anneal.to_string()),
            ("init_range", l.init_range.to_string()),
            ("bonferroni_m", self.bonferroni_m.to_string()),
            ("prior_scale", self.prior_scale.to_string()),
            ("stimuli", join(self.stimuli.clone())),
            ("checkpoints", join(self.checkpoints.iter().map(|p| p.display().to_string()).collect())),
            ("vocab", opt(&self.vocab)),
            ("corpus", opt(&self.corpus)),
            (
                "split",
                format!("{},{},{}", self.split.train, self.split.valid, self.split.test),
            ),
            ("split_seed", self.split.seed.to_string()),
        ];
        m.sort_by_key(|(k, _)| *k);
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical text. Output locations and worker counts
    /// are excluded so they never change results or cache keys.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_kv().as_bytes()))[..16].to_string()
    }
}

/// Parse `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str, source: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected `key = value`", source.display(), i + 1)))?;
        let k = k.trim();
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("{}:{}: duplicate key `{k}`", source.display(), i + 1)));
        }
    }
    Ok(map)
}

/// Turn `--key value` (or `--key=value`) arguments into pairs. Dashes in
/// keys are read as underscores.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected a --key, got `{a}`")))?;
        let (k, v) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        let k = k.replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown option --{k}")));
        }
        out.push((k, v));
    }
    Ok(out)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn num<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(s, key))
        .collect()
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.trim().is_empty()).then(|| PathBuf::from(v.trim()))
}

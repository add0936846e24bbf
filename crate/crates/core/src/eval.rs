//! Surprisal, attachment deltas and their categorical coding.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::lang::Language;
use crate::lm::{sentence_log_probs, Checkpoint, Lstm};
use crate::stimuli::StimulusPair;

/// Pairs are scored in chunks of this size, one chunk per rayon task.
const PAIR_CHUNK: usize = 512;

/// Surprisal (nats) of every token of a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalRecord {
    pub sentence_id: String,
    /// `-ln p(w_i | w_0 .. w_{i-1})`, one entry per token.
    pub surprisals: Vec<f64>,
    /// Surprisal of the end-of-sentence marker after the last token.
    pub eos_surprisal: f64,
    pub target_index: Option<usize>,
}

impl SurprisalRecord {
    pub fn target_surprisal(&self) -> Option<f64> {
        self.target_index.and_then(|i| self.surprisals.get(i).copied())
    }

    /// `-ln p(w_0 .. w_n)` (without the end marker).
    pub fn total(&self) -> f64 {
        self.surprisals.iter().sum()
    }
}

/// Categorical reading of a delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coding {
    Low,
    High,
    Tie,
}

impl Coding {
    pub fn of(delta: f64) -> Coding {
        if delta > 0.0 {
            Coding::Low
        } else if delta < 0.0 {
            Coding::High
        } else {
            Coding::Tie
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Coding::Low => "LOW",
            Coding::High => "HIGH",
            Coding::Tie => "TIE",
        }
    }
}

impl fmt::Display for Coding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Coding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LOW" => Ok(Coding::Low),
            "HIGH" => Ok(Coding::High),
            "TIE" => Ok(Coding::Tie),
            other => Err(Error::Data(format!("unknown coding `{other}`"))),
        }
    }
}

/// Surprisal difference at the RC verb of one pair, for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRecord {
    pub pair_id: String,
    pub template_id: String,
    pub language: Language,
    pub seed: Option<u64>,
    pub surprisal_high_agree: f64,
    pub surprisal_low_agree: f64,
    /// `surprisal_high_agree - surprisal_low_agree`; positive means a LOW bias.
    pub delta: f64,
    pub coding: Coding,
}

impl DeltaRecord {
    pub fn new(pair: &StimulusPair, seed: Option<u64>, surprisal_high_agree: f64, surprisal_low_agree: f64) -> Self {
        let delta = surprisal_high_agree - surprisal_low_agree;
        DeltaRecord {
            pair_id: pair.id.clone(),
            template_id: pair.template_id.clone(),
            language: pair.language,
            seed,
            surprisal_high_agree,
            surprisal_low_agree,
            delta,
            coding: Coding::of(delta),
        }
    }
}

/// A trained model together with the vocabulary used to encode its input.
pub struct Evaluator<'a> {
    model: &'a Lstm<f32>,
    vocab: &'a Vocab,
    seed: Option<u64>,
}

impl<'a> Evaluator<'a> {
    /// Fails if the checkpoint was trained with a different vocabulary.
    pub fn new(checkpoint: &'a Checkpoint, vocab: &'a Vocab) -> Result<Self> {
        checkpoint.ensure_vocab(vocab)?;
        Ok(Evaluator {
            model: &checkpoint.model,
            vocab,
            seed: Some(checkpoint.config.seed),
        })
    }

    /// Evaluate a bare model; the caller vouches for the vocabulary.
    pub fn from_model(model: &'a Lstm<f32>, vocab: &'a Vocab) -> Result<Self> {
        if model.vocab_size() != vocab.len() {
            return Err(Error::Data(format!(
                "model has {} output types, vocabulary has {}",
                model.vocab_size(),
                vocab.len()
            )));
        }
        Ok(Evaluator {
            model,
            vocab,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn encode(&self, id: &str, tokens: &[String]) -> Vec<u32> {
        tokens
            .iter()
            .map(|w| {
                self.vocab.get(w).unwrap_or_else(|| {
                    log::warn!("{id}: `{w}` is not in the vocabulary, scoring it as {}", crate::corpus::UNK);
                    Vocab::UNK_ID
                })
            })
            .collect()
    }

    pub fn sequence_surprisal(&self, id: &str, tokens: &[String], target: Option<usize>) -> Result<SurprisalRecord> {
        if tokens.is_empty() {
            return Err(Error::Input(format!("{id}: empty sentence")));
        }
        let ids = self.encode(id, tokens);
        let mut lp = sentence_log_probs(self.model, &[ids.as_slice()])?.pop().unwrap();
        let eos = -lp.pop().unwrap();
        Ok(SurprisalRecord {
            sentence_id: id.to_string(),
            surprisals: lp.into_iter().map(|x| -x).collect(),
            eos_surprisal: eos,
            target_index: target,
        })
    }

    pub fn attachment_delta(&self, pair: &StimulusPair) -> Result<DeltaRecord> {
        Ok(self.attachment_deltas(std::slice::from_ref(pair))?.pop().unwrap())
    }

    /// Deltas for many pairs, scored in length-grouped batches. Output order
    /// follows `pairs`.
    pub fn attachment_deltas(&self, pairs: &[StimulusPair]) -> Result<Vec<DeltaRecord>> {
        for p in pairs {
            p.validate()?;
        }
        let chunks: Vec<Result<Vec<DeltaRecord>>> = pairs
            .par_chunks(PAIR_CHUNK)
            .map(|chunk| {
                // Only the prefix through the target matters.
                let mut encoded = Vec::with_capacity(2 * chunk.len());
                for p in chunk {
                    encoded.push(self.encode(&p.id, &p.high_agree[..=p.target_high]));
                    encoded.push(self.encode(&p.id, &p.low_agree[..=p.target_low]));
                }
                let refs: Vec<&[u32]> = encoded.iter().map(Vec::as_slice).collect();
                let lp = sentence_log_probs(self.model, &refs)?;
                Ok(chunk
                    .iter()
                    .enumerate()
                    .map(|(k, p)| DeltaRecord::new(p, self.seed, -lp[2 * k][p.target_high], -lp[2 * k + 1][p.target_low]))
                    .collect())
            })
            .collect();
        let mut out = Vec::with_capacity(pairs.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Counts and proportions for a set of deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean_delta: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub n_tie: usize,
}

impl Summary {
    pub fn of<'a, I: IntoIterator<Item = &'a DeltaRecord>>(records: I) -> Summary {
        let mut s = Summary {
            n: 0,
            mean_delta: 0.0,
            n_low: 0,
            n_high: 0,
            n_tie: 0,
        };
        let mut sum = 0.0;
        for r in records {
            s.n += 1;
            sum += r.delta;
            match r.coding {
                Coding::Low => s.n_low += 1,
                Coding::High => s.n_high += 1,
                Coding::Tie => s.n_tie += 1,
            }
        }
        s.mean_delta = if s.n == 0 { f64::NAN } else { sum / s.n as f64 };
        s
    }

    /// Share of LOW codings among non-tied deltas (`None` if all tie).
    pub fn prop_low(&self) -> Option<f64> {
        let d = self.n_low + self.n_high;
        (d > 0).then(|| self.n_low as f64 / d as f64)
    }

    pub fn prop_high(&self) -> Option<f64> {
        let d = self.n_low + self.n_high;
        (d > 0).then(|| self.n_high as f64 / d as f64)
    }
}

/// Pooled and per-seed summaries of a delta set.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub pooled: Summary,
    /// Sorted by seed; records without a seed are grouped under `None`.
    pub per_seed: Vec<(Option<u64>, Summary)>,
}

pub fn aggregate_report(deltas: &[DeltaRecord]) -> Result<AggregateReport> {
    if deltas.is_empty() {
        return Err(Error::Input("no deltas to aggregate".into()));
    }
    let mut seeds: Vec<Option<u64>> = deltas.iter().map(|d| d.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed = seeds
        .into_iter()
        .map(|s| (s, Summary::of(deltas.iter().filter(|d| d.seed == s))))
        .collect();
    Ok(AggregateReport {
        pooled: Summary::of(deltas),
        per_seed,
    })
}

pub const RESULTS_HEADER: [&str; 8] = [
    "pair_id",
    "template_id",
    "language",
    "seed",
    "surprisal_high_agree",
    "surprisal_low_agree",
    "delta_nats",
    "coding",
];

pub fn write_results<W: Write>(records: &[DeltaRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in records {
        out.write_record([
            r.pair_id.clone(),
            r.template_id.clone(),
            r.language.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.surprisal_high_agree.to_string(),
            r.surprisal_low_agree.to_string(),
            r.delta.to_string(),
            r.coding.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn save_results(records: &[DeltaRecord], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results(records, std::io::BufWriter::new(f))
}

/// Read a results CSV; lines starting with `#` are skipped.
pub fn load_results(path: &Path) -> Result<Vec<DeltaRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::parse(path, 1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(k + 2, |p| p.line() as usize);
        let num = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad number `{}`", &row[i])))
        };
        let seed = if row[3].is_empty() {
            None
        } else {
            Some(row[3].parse().map_err(|_| Error::parse(path, line, "bad seed"))?)
        };
        out.push(DeltaRecord {
            pair_id: row[0].to_string(),
            template_id: row[1].to_string(),
            language: row[2].parse()?,
            seed,
            surprisal_high_agree: num(4)?,
            surprisal_low_agree: num(5)?,
            delta: num(6)?,
            coding: row[7].parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::Params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn vocab() -> Vocab {
        Vocab::from_words(["the", "dog", "dogs", "of", "man", "men", "that", "was", "were"]).unwrap()
    }

    fn pair(high: &str, low: &str, target: usize) -> StimulusPair {
        StimulusPair {
            id: "p1".into(),
            template_id: "t1".into(),
            language: Language::English,
            high_agree: toks(high),
            low_agree: toks(low),
            target_high: target,
            target_low: target,
            meta: None,
        }
    }

    fn random_model(v: usize) -> Lstm<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        Lstm::new(Params::uniform(&mut rng, v, 6, 5, 2, 0.5))
    }

    #[test]
    fn uniform_model_surprisal() {
        let v = vocab();
        let model = Lstm::new(Params::zeros(v.len(), 3, 3, 1));
        let ev = Evaluator::from_model(&model, &v).unwrap();
        let rec = ev.sequence_surprisal("s", &toks("the dog was"), Some(2)).unwrap();
        for s in &rec.surprisals {
            assert!((s - (v.len() as f64).ln()).abs() < 1e-12);
        }
        assert_eq!(rec.surprisals.len(), 3);
        assert!(ev.sequence_surprisal("e", &[], None).is_err());
    }

    #[test]
    fn swapping_members_negates_delta() {
        let v = vocab();
        let model = random_model(v.len());
        let ev = Evaluator::from_model(&model, &v).unwrap();
        let p = pair("the dog of the men that was", "the dogs of the man that was", 6);
        let d = ev.attachment_delta(&p).unwrap();
        let s = ev.attachment_delta(&p.swapped()).unwrap();
        assert_eq!(d.delta, -s.delta);
        assert_ne!(d.coding, Coding::Tie);
        assert_ne!(d.coding, s.coding);
        let same = pair("the dog of the men that was", "the dog of the men that was", 6);
        let t = ev.attachment_delta(&same).unwrap();
        assert_eq!((t.delta, t.coding), (0.0, Coding::Tie));
    }

    #[test]
    fn context_free_model_has_no_preference() {
        // Zero recurrent weights with a nonzero output bias: a unigram model.
        let v = vocab();
        let mut params: Params<f32> = Params::zeros(v.len(), 3, 3, 1);
        for (i, b) in params.decoder_b.iter_mut().enumerate() {
            *b = (i as f32 * 0.37).sin();
        }
        let model = Lstm::new(params);
        let ev = Evaluator::from_model(&model, &v).unwrap();
        let p = pair("the dog of the men that were", "the dogs of the man that were", 6);
        assert_eq!(ev.attachment_delta(&p).unwrap().delta, 0.0);
    }

    #[test]
    fn batched_deltas_match_single() {
        let v = vocab();
        let model = random_model(v.len());
        let ev = Evaluator::from_model(&model, &v).unwrap();
        let pairs = vec![
            pair("the dog of the men that was", "the dogs of the man that was", 6),
            pair("the men of the dog that were", "the man of the dogs that were", 6),
            pair("the dog that was", "the dogs that was", 3),
        ];
        let batch = ev.attachment_deltas(&pairs).unwrap();
        for (p, d) in pairs.iter().zip(&batch) {
            assert_eq!(&ev.attachment_delta(p).unwrap(), d);
            let hi = ev.sequence_surprisal("h", &p.high_agree, Some(p.target_high)).unwrap();
            let lo = ev.sequence_surprisal("l", &p.low_agree, Some(p.target_low)).unwrap();
            assert_eq!(d.delta, hi.target_surprisal().unwrap() - lo.target_surprisal().unwrap());
        }
    }

    #[test]
    fn mismatched_target_is_a_validation_error() {
        let v = vocab();
        let model = random_model(v.len());
        let ev = Evaluator::from_model(&model, &v).unwrap();
        let p = pair("the dog that was", "the dogs that were", 3);
        assert!(matches!(ev.attachment_delta(&p), Err(Error::Validation(_))));
    }

    fn rec(delta: f64, seed: u64) -> DeltaRecord {
        let p = pair("a", "a", 0);
        DeltaRecord::new(&p, Some(seed), 1.0 + delta, 1.0)
    }

    #[test]
    fn aggregate_proportions() {
        let deltas: Vec<_> = vec![rec(1.0, 1), rec(-1.0, 1), rec(0.0, 2), rec(2.0, 2)];
        let r = aggregate_report(&deltas).unwrap();
        assert_eq!(r.pooled.n_tie, 1);
        assert!((r.pooled.prop_low().unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_seed.len(), 2);
        assert_eq!(r.per_seed[0].1.prop_low(), Some(0.5));
        assert!(aggregate_report(&[]).is_err());
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let deltas = vec![rec(0.1234567891234, 3), rec(-2.5, 4)];
        save_results(&deltas, &path).unwrap();
        assert_eq!(load_results(&path).unwrap(), deltas);
    }
}

//! The synthetic language used for controlled-rearing experiments.
//!
//! Two sentence templates exist. Fillers follow
//! `D N (P D N) (Aux) V (D N) (P D N)` with the auxiliary agreeing with the
//! subject; relative-clause sentences follow
//! `D N Aux V D N of D N that was/were V`, where the two object nominals
//! always differ in number so that the RC auxiliary identifies the
//! attachment site unambiguously.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lang::{Language, Number};
use crate::stimuli::{PairMeta, StimulusPair};

pub const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.txt");

/// Preposition linking the two nominals of an RC sentence.
pub const OF: &str = "of";
/// Relativizer of an RC sentence.
pub const THAT: &str = "that";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub nouns: Vec<(String, String)>,
    pub verbs: Vec<String>,
    /// `(singular, plural)`; the first pair is the RC auxiliary.
    pub auxiliaries: Vec<(String, String)>,
    pub determiners: Vec<String>,
    pub prepositions: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON, Path::new("lexicon.txt")).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    /// Parse the sectioned lexicon format (`[nouns]`, `[verbs]`,
    /// `[auxiliaries]`, `[determiners]`, `[prepositions]`).
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut lex = Lexicon {
            nouns: vec![],
            verbs: vec![],
            auxiliaries: vec![],
            determiners: vec![],
            prepositions: vec![],
        };
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = Some(line[1..line.len() - 1].trim().to_ascii_lowercase());
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let pair = || -> Result<(String, String)> {
                match fields.as_slice() {
                    [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                    _ => Err(Error::parse(source, i + 1, "expected `singular<TAB>plural`")),
                }
            };
            let single = || -> Result<String> {
                match fields.as_slice() {
                    [a] => Ok(a.to_string()),
                    _ => Err(Error::parse(source, i + 1, "expected a single word")),
                }
            };
            match section.as_deref() {
                Some("nouns") => lex.nouns.push(pair()?),
                Some("auxiliaries") => lex.auxiliaries.push(pair()?),
                Some("verbs") => lex.verbs.push(single()?),
                Some("determiners") => lex.determiners.push(single()?),
                Some("prepositions") => lex.prepositions.push(single()?),
                Some(other) => {
                    return Err(Error::parse(source, i + 1, format!("unknown section `[{other}]`")))
                }
                None => return Err(Error::parse(source, i + 1, "entry before any section header")),
            }
        }
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[nouns]\n");
        for (a, b) in &self.nouns {
            s.push_str(&format!("{a}\t{b}\n"));
        }
        s.push_str("[verbs]\n");
        for v in &self.verbs {
            s.push_str(&format!("{v}\n"));
        }
        s.push_str("[auxiliaries]\n");
        for (a, b) in &self.auxiliaries {
            s.push_str(&format!("{a}\t{b}\n"));
        }
        s.push_str("[determiners]\n");
        for d in &self.determiners {
            s.push_str(&format!("{d}\n"));
        }
        s.push_str("[prepositions]\n");
        for p in &self.prepositions {
            s.push_str(&format!("{p}\n"));
        }
        s
    }

    /// Every category nonempty and every form unique across the lexicon.
    /// `that` is reserved; `of` is reserved except as a preposition.
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("nouns", self.nouns.is_empty()),
            ("verbs", self.verbs.is_empty()),
            ("auxiliaries", self.auxiliaries.is_empty()),
            ("determiners", self.determiners.is_empty()),
            ("prepositions", self.prepositions.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("lexicon category `{name}` is empty")));
            }
        }
        let mut seen: HashSet<&str> = [OF, THAT].into_iter().collect();
        let forms = self
            .nouns
            .iter()
            .chain(&self.auxiliaries)
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .chain(self.verbs.iter().map(String::as_str))
            .chain(self.determiners.iter().map(String::as_str))
            .chain(self.prepositions.iter().map(String::as_str).filter(|p| *p != OF));
        for f in forms {
            if !seen.insert(f) {
                return Err(Error::Config(format!("lexicon form `{f}` is not unique")));
            }
        }
        Ok(())
    }

    fn noun(&self, lemma: usize, number: Number) -> &str {
        let (sg, pl) = &self.nouns[lemma];
        match number {
            Number::Singular => sg,
            Number::Plural => pl,
        }
    }

    fn aux(&self, which: usize, number: Number) -> &str {
        let (sg, pl) = &self.auxiliaries[which];
        match number {
            Number::Singular => sg,
            Number::Plural => pl,
        }
    }

    /// The auxiliary pair used inside relative clauses.
    pub fn rc_aux(&self, number: Number) -> &str {
        self.aux(0, number)
    }

    /// Number of distinct test-pair combinations [`generate_test_pairs`] can draw.
    pub fn test_pair_combinations(&self) -> u128 {
        let n = self.nouns.len() as u128;
        (2 * n)
            * self.determiners.len() as u128
            * self.auxiliaries.len() as u128
            * self.verbs.len() as u128
            * n
            * n.saturating_sub(1)
            * 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attachment {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Construction {
    Filler,
    RcHigh,
    RcLow,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::Filler => "FILLER",
            Construction::RcHigh => "RC_HIGH",
            Construction::RcLow => "RC_LOW",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FILLER" => Ok(Construction::Filler),
            "RC_HIGH" => Ok(Construction::RcHigh),
            "RC_LOW" => Ok(Construction::RcLow),
            other => Err(Error::Data(format!("unknown construction tag `{other}`"))),
        }
    }
}

/// Token positions of the nominals and auxiliary inside an RC sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RcIndices {
    pub high_noun: usize,
    pub low_noun: usize,
    pub rc_aux: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub construction: Construction,
    pub rc: Option<RcIndices>,
}

impl Sentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Which optional constituents of a filler are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FillerShape {
    pub subject_pp: bool,
    pub aux: bool,
    pub object: bool,
    pub object_pp: bool,
}

impl FillerShape {
    pub const FULL: FillerShape = FillerShape {
        subject_pp: true,
        aux: true,
        object: true,
        object_pp: true,
    };
    pub const BARE: FillerShape = FillerShape {
        subject_pp: false,
        aux: false,
        object: false,
        object_pp: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub corpus_size: usize,
    /// Absolute number of RC sentences.
    pub rc_count: usize,
    /// Fraction of RC sentences with HIGH attachment.
    pub high_proportion: f64,
    pub seed: u64,
    /// Inclusion probability of each optional filler constituent.
    pub optional_p: f64,
}

impl SynthConfig {
    pub fn new(corpus_size: usize, rc_count: usize, high_proportion: f64, seed: u64) -> Self {
        SynthConfig {
            corpus_size,
            rc_count,
            high_proportion,
            seed,
            optional_p: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rc_count > self.corpus_size {
            return Err(Error::Config(format!(
                "rc_count {} exceeds corpus_size {}",
                self.rc_count, self.corpus_size
            )));
        }
        if !(0.0..=1.0).contains(&self.high_proportion) {
            return Err(Error::Config(format!(
                "high_proportion {} outside [0, 1]",
                self.high_proportion
            )));
        }
        if !(0.0..=1.0).contains(&self.optional_p) {
            return Err(Error::Config(format!("optional_p {} outside [0, 1]", self.optional_p)));
        }
        Ok(())
    }

    /// `(high, low)` RC counts. The high count is rounded half away from zero
    /// and the low count is the remainder, so the two always sum to `rc_count`.
    pub fn rc_split(&self) -> (usize, usize) {
        let high = (self.rc_count as f64 * self.high_proportion).round() as usize;
        let high = high.min(self.rc_count);
        (high, self.rc_count - high)
    }
}

fn pick<'a, T, R: Rng + ?Sized>(rng: &mut R, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn number<R: Rng + ?Sized>(rng: &mut R) -> Number {
    if rng.random_bool(0.5) {
        Number::Singular
    } else {
        Number::Plural
    }
}

fn push_np<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, out: &mut Vec<String>, num: Number) -> usize {
    out.push(pick(rng, &lex.determiners).clone());
    let lemma = rng.random_range(0..lex.nouns.len());
    out.push(lex.noun(lemma, num).to_string());
    out.len() - 1
}

fn push_pp<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, out: &mut Vec<String>) {
    out.push(pick(rng, &lex.prepositions).clone());
    let num = number(rng);
    push_np(rng, lex, out, num);
}

/// Sample a filler with a fixed set of optional constituents.
pub fn sample_filler_shaped<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, shape: FillerShape) -> Result<Sentence> {
    lex.validate()?;
    Ok(build_filler(rng, lex, shape))
}

fn build_filler<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, shape: FillerShape) -> Sentence {
    let mut t = Vec::with_capacity(12);
    let subj = number(rng);
    push_np(rng, lex, &mut t, subj);
    if shape.subject_pp {
        push_pp(rng, lex, &mut t);
    }
    if shape.aux {
        let which = rng.random_range(0..lex.auxiliaries.len());
        t.push(lex.aux(which, subj).to_string());
    }
    t.push(pick(rng, &lex.verbs).clone());
    if shape.object {
        let num = number(rng);
        push_np(rng, lex, &mut t, num);
    }
    if shape.object_pp {
        push_pp(rng, lex, &mut t);
    }
    Sentence {
        tokens: t,
        construction: Construction::Filler,
        rc: None,
    }
}

/// Sample a filler, including each optional constituent with probability `optional_p`.
pub fn sample_filler_with<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, optional_p: f64) -> Result<Sentence> {
    lex.validate()?;
    Ok(draw_filler(rng, lex, optional_p))
}

fn draw_filler<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, optional_p: f64) -> Sentence {
    let shape = FillerShape {
        subject_pp: rng.random_bool(optional_p),
        aux: rng.random_bool(optional_p),
        object: rng.random_bool(optional_p),
        object_pp: rng.random_bool(optional_p),
    };
    build_filler(rng, lex, shape)
}

pub fn sample_filler<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon) -> Result<Sentence> {
    sample_filler_with(rng, lex, 0.5)
}

/// The lexical choices behind an RC sentence or test pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RcFrame {
    subj_lemma: usize,
    subj_number: Number,
    det: usize,
    aux: usize,
    verb: usize,
    high_lemma: usize,
    low_lemma: usize,
}

impl RcFrame {
    /// Assumes a validated lexicon with at least two noun lemmas.
    fn sample<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon) -> Self {
        let high_lemma = rng.random_range(0..lex.nouns.len());
        let mut low_lemma = rng.random_range(0..lex.nouns.len() - 1);
        if low_lemma >= high_lemma {
            low_lemma += 1;
        }
        RcFrame {
            subj_lemma: rng.random_range(0..lex.nouns.len()),
            subj_number: number(rng),
            det: rng.random_range(0..lex.determiners.len()),
            aux: rng.random_range(0..lex.auxiliaries.len()),
            verb: rng.random_range(0..lex.verbs.len()),
            high_lemma,
            low_lemma,
        }
    }

    /// Tokens up to and including the RC auxiliary, plus annotation.
    fn prefix(&self, lex: &Lexicon, high_number: Number, rc_number: Number) -> (Vec<String>, RcIndices) {
        let det = &lex.determiners[self.det];
        let mut t = vec![
            det.clone(),
            lex.noun(self.subj_lemma, self.subj_number).to_string(),
            lex.aux(self.aux, self.subj_number).to_string(),
            lex.verbs[self.verb].clone(),
            det.clone(),
            lex.noun(self.high_lemma, high_number).to_string(),
            OF.to_string(),
            det.clone(),
            lex.noun(self.low_lemma, high_number.flip()).to_string(),
            THAT.to_string(),
        ];
        t.push(lex.rc_aux(rc_number).to_string());
        (
            t,
            RcIndices {
                high_noun: 5,
                low_noun: 8,
                rc_aux: 10,
            },
        )
    }
}

/// Sample a template-(7b) RC sentence whose RC auxiliary agrees with the
/// nominal selected by `attachment`.
pub fn sample_rc<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, attachment: Attachment) -> Result<Sentence> {
    lex.validate()?;
    check_rc_nouns(lex)?;
    Ok(draw_rc(rng, lex, attachment))
}

fn check_rc_nouns(lex: &Lexicon) -> Result<()> {
    if lex.nouns.len() < 2 {
        return Err(Error::Config("RC sentences need at least two noun lemmas".into()));
    }
    Ok(())
}

fn draw_rc<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, attachment: Attachment) -> Sentence {
    let frame = RcFrame::sample(rng, lex);
    let high_number = number(rng);
    let rc_number = match attachment {
        Attachment::High => high_number,
        Attachment::Low => high_number.flip(),
    };
    let (mut tokens, idx) = frame.prefix(lex, high_number, rc_number);
    tokens.push(pick(rng, &lex.verbs).clone());
    Sentence {
        tokens,
        construction: match attachment {
            Attachment::High => Construction::RcHigh,
            Attachment::Low => Construction::RcLow,
        },
        rc: Some(idx),
    }
}

/// An annotated collection of sentences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn count(&self, c: Construction) -> usize {
        self.sentences.iter().filter(|s| s.construction == c).count()
    }

    /// Token sequences, dropping annotations.
    pub fn token_lists(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.tokens.clone()).collect()
    }

    /// Write the corpus (one sentence per line) and its annotation sidecar.
    pub fn save(&self, corpus_path: &Path, annotation_path: &Path) -> Result<()> {
        let f = fs::File::create(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
        let mut w = BufWriter::new(f);
        for s in &self.sentences {
            writeln!(w, "{}", s.text()).map_err(|e| Error::io(corpus_path, e))?;
        }
        w.flush().map_err(|e| Error::io(corpus_path, e))?;

        let f = fs::File::create(annotation_path).map_err(|e| Error::io(annotation_path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(annotation_path, e);
        writeln!(w, "line\ttag\thigh_noun\tlow_noun\trc_aux").map_err(io)?;
        for (i, s) in self.sentences.iter().enumerate() {
            match s.rc {
                Some(rc) => writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}",
                    i + 1,
                    s.construction,
                    rc.high_noun,
                    rc.low_noun,
                    rc.rc_aux
                ),
                None => writeln!(w, "{}\t{}\t-\t-\t-", i + 1, s.construction),
            }
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Read back a corpus written by [`Corpus::save`].
    pub fn load(corpus_path: &Path, annotation_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
        let ann = fs::read_to_string(annotation_path).map_err(|e| Error::io(annotation_path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        let mut sentences = Vec::with_capacity(lines.len());
        let mut ann_lines = ann.lines().enumerate().skip(1);
        for (i, line) in lines.iter().enumerate() {
            let (ln, a) = ann_lines
                .next()
                .ok_or_else(|| Error::parse(annotation_path, i + 2, "annotation missing for sentence"))?;
            let f: Vec<&str> = a.split('\t').collect();
            let err = |m: &str| Error::parse(annotation_path, ln + 1, m.to_string());
            if f.len() != 5 || f[0].parse::<usize>().ok() != Some(i + 1) {
                return Err(err("malformed annotation row"));
            }
            let construction = Construction::from_str(f[1]).map_err(|e| err(&e.to_string()))?;
            let rc = if construction == Construction::Filler {
                None
            } else {
                let p = |s: &str| s.parse::<usize>().map_err(|_| err("bad index"));
                Some(RcIndices {
                    high_noun: p(f[2])?,
                    low_noun: p(f[3])?,
                    rc_aux: p(f[4])?,
                })
            };
            sentences.push(Sentence {
                tokens: line.split(' ').map(String::from).collect(),
                construction,
                rc,
            });
        }
        Ok(Corpus { sentences })
    }
}

/// Generate a training corpus with exactly the requested construction counts.
///
/// Sentences are unique; a duplicate draw is discarded and resampled, giving
/// up after `100 * corpus_size` draws. The final order is a seeded shuffle.
pub fn generate_corpus(config: &SynthConfig, lex: &Lexicon) -> Result<Corpus> {
    config.validate()?;
    lex.validate()?;
    if config.rc_count > 0 {
        check_rc_nouns(lex)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n_high, n_low) = config.rc_split();
    let n_filler = config.corpus_size - config.rc_count;
    let budget = 100usize.saturating_mul(config.corpus_size.max(1));
    let mut draws = 0usize;
    let mut seen: HashSet<String> = HashSet::with_capacity(config.corpus_size);
    let mut sentences = Vec::with_capacity(config.corpus_size);

    let plan = [
        (Construction::RcHigh, n_high),
        (Construction::RcLow, n_low),
        (Construction::Filler, n_filler),
    ];
    for (construction, want) in plan {
        let mut got = 0;
        while got < want {
            if draws >= budget {
                return Err(Error::Generation(format!(
                    "could not draw {want} unique {construction} sentences within {budget} attempts; \
                     the lexicon is too small for corpus_size {}",
                    config.corpus_size
                )));
            }
            draws += 1;
            let s = match construction {
                Construction::Filler => draw_filler(&mut rng, lex, config.optional_p),
                Construction::RcHigh => draw_rc(&mut rng, lex, Attachment::High),
                Construction::RcLow => draw_rc(&mut rng, lex, Attachment::Low),
            };
            if seen.insert(s.text()) {
                sentences.push(s);
                got += 1;
            }
        }
    }
    sentences.shuffle(&mut rng);
    Ok(Corpus { sentences })
}

/// Draw `n` distinct ambiguous test pairs `D N Aux V D N of D N that was/were`.
///
/// Within a pair the RC auxiliary is fixed; in the high-agree member the
/// higher nominal shares its number, in the low-agree member the lower one.
/// The target index points at the RC auxiliary.
pub fn generate_test_pairs<R: Rng + ?Sized>(rng: &mut R, lex: &Lexicon, n: usize) -> Result<Vec<StimulusPair>> {
    generate_test_pairs_excluding(rng, lex, n, None)
}

/// Like [`generate_test_pairs`]; with `holdout`, no test sentence may equal
/// the prefix (through the RC auxiliary) of any RC sentence in that corpus.
pub fn generate_test_pairs_excluding<R: Rng + ?Sized>(
    rng: &mut R,
    lex: &Lexicon,
    n: usize,
    holdout: Option<&Corpus>,
) -> Result<Vec<StimulusPair>> {
    if n == 0 {
        return Err(Error::Input("need at least one test pair".into()));
    }
    lex.validate()?;
    check_rc_nouns(lex)?;
    if n as u128 > lex.test_pair_combinations() {
        return Err(Error::Generation(format!(
            "{n} test pairs requested but the lexicon only allows {} distinct combinations",
            lex.test_pair_combinations()
        )));
    }
    let banned: HashSet<String> = holdout
        .map(|c| {
            c.sentences
                .iter()
                .filter_map(|s| s.rc.map(|rc| s.tokens[..=rc.rc_aux].join(" ")))
                .collect()
        })
        .unwrap_or_default();

    let budget = 1000 * n + 10_000;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n {
        if draws >= budget {
            return Err(Error::Generation(format!(
                "only {} of {n} distinct test pairs found after {budget} draws",
                out.len()
            )));
        }
        draws += 1;
        let frame = RcFrame::sample(rng, lex);
        let rc_number = number(rng);
        if !seen.insert((frame, rc_number)) {
            continue;
        }
        let (high, idx) = frame.prefix(lex, rc_number, rc_number);
        let (low, _) = frame.prefix(lex, rc_number.flip(), rc_number);
        if banned.contains(&high.join(" ")) || banned.contains(&low.join(" ")) {
            continue;
        }
        out.push(StimulusPair {
            id: format!("synth{:04}", out.len() + 1),
            template_id: "synthetic".into(),
            language: Language::Synthetic,
            high_agree: high,
            low_agree: low,
            target_high: idx.rc_aux,
            target_low: idx.rc_aux,
            meta: Some(PairMeta {
                noun_high: lex.nouns[frame.high_lemma].0.clone(),
                noun_low: lex.nouns[frame.low_lemma].0.clone(),
                verb_number: rc_number,
            }),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn default_lexicon_sizes() {
        let lex = Lexicon::default();
        assert_eq!(lex.nouns.len(), 30);
        assert_eq!(lex.verbs.len(), 14);
        assert_eq!(lex.auxiliaries.len(), 2);
        assert_eq!(lex.determiners.len(), 1);
        assert_eq!(lex.prepositions.len(), 4);
        assert_eq!(lex.rc_aux(Number::Singular), "was");
        assert_eq!(lex.rc_aux(Number::Plural), "were");
    }

    #[test]
    fn lexicon_rejects_collisions_and_empty_categories() {
        let mut lex = Lexicon::default();
        lex.verbs.push("near".into());
        assert!(matches!(lex.validate(), Err(Error::Config(_))));
        let mut lex = Lexicon::default();
        lex.prepositions.clear();
        assert!(matches!(lex.validate(), Err(Error::Config(_))));
        assert!(sample_filler(&mut rng(0), &lex).is_err());
    }

    #[test]
    fn lexicon_text_round_trip() {
        let lex = Lexicon::default();
        assert_eq!(Lexicon::parse(&lex.to_text(), Path::new("x")).unwrap(), lex);
    }

    #[test]
    fn bare_and_full_fillers() {
        let lex = Lexicon::default();
        let bare = sample_filler_shaped(&mut rng(1), &lex, FillerShape::BARE).unwrap();
        assert_eq!(bare.tokens.len(), 3);
        let full = sample_filler_shaped(&mut rng(1), &lex, FillerShape::FULL).unwrap();
        assert_eq!(full.tokens.len(), 12);
        assert_eq!(full.tokens[0], "the");
        assert!(lex.prepositions.contains(&full.tokens[2]));
    }

    #[test]
    fn high_and_low_rc_agreement() {
        let lex = Lexicon::default();
        let mut r = rng(7);
        for att in [Attachment::High, Attachment::Low] {
            let s = sample_rc(&mut r, &lex, att).unwrap();
            let rc = s.rc.unwrap();
            let aux_pl = s.tokens[rc.rc_aux] == "were";
            let high_pl = lex.nouns.iter().any(|(_, pl)| *pl == s.tokens[rc.high_noun]);
            let low_pl = lex.nouns.iter().any(|(_, pl)| *pl == s.tokens[rc.low_noun]);
            assert_ne!(high_pl, low_pl);
            match att {
                Attachment::High => assert_eq!(aux_pl, high_pl),
                Attachment::Low => assert_eq!(aux_pl, low_pl),
            }
            assert_eq!(s.tokens.len(), 12);
        }
    }

    #[test]
    fn rc_split_sums() {
        for (rc, hp) in [(20, 1.0), (12000, 0.5), (7, 0.5), (3, 0.25), (0, 0.3), (11, 0.0)] {
            let c = SynthConfig::new(100_000, rc, hp, 0);
            let (h, l) = c.rc_split();
            assert_eq!(h + l, rc);
        }
        assert_eq!(SynthConfig::new(100, 7, 0.5, 0).rc_split(), (4, 3));
    }

    #[test]
    fn invalid_configs() {
        assert!(SynthConfig::new(10, 11, 0.5, 0).validate().is_err());
        assert!(SynthConfig::new(10, 1, 1.5, 0).validate().is_err());
    }

    #[test]
    fn tiny_lexicon_cannot_fill_a_large_corpus() {
        let lex = Lexicon {
            nouns: vec![("a".into(), "as".into()), ("b".into(), "bs".into())],
            verbs: vec!["v".into()],
            auxiliaries: vec![("x".into(), "xs".into())],
            determiners: vec!["d".into()],
            prepositions: vec!["p".into()],
        };
        let err = generate_corpus(&SynthConfig::new(5_000, 0, 0.0, 1), &lex).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }

    #[test]
    fn too_many_test_pairs() {
        let lex = Lexicon {
            nouns: vec![("a".into(), "as".into()), ("b".into(), "bs".into())],
            verbs: vec!["v".into()],
            auxiliaries: vec![("x".into(), "xs".into())],
            determiners: vec!["d".into()],
            prepositions: vec!["p".into()],
        };
        // 4 subject forms * 2 ordered lemma pairs * 2 verb numbers
        assert_eq!(lex.test_pair_combinations(), 16);
        assert_eq!(generate_test_pairs(&mut rng(0), &lex, 16).unwrap().len(), 16);
        assert!(matches!(
            generate_test_pairs(&mut rng(0), &lex, 17),
            Err(Error::Generation(_))
        ));
        assert!(generate_test_pairs(&mut rng(0), &lex, 0).is_err());
    }

    #[test]
    fn corpus_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(&SynthConfig::new(200, 20, 0.5, 3), &Lexicon::default()).unwrap();
        let (a, b) = (dir.path().join("c.txt"), dir.path().join("c.tsv"));
        c.save(&a, &b).unwrap();
        assert_eq!(Corpus::load(&a, &b).unwrap(), c);
    }

    #[test]
    fn holdout_excludes_training_prefixes() {
        let lex = Lexicon {
            nouns: vec![("a".into(), "as".into()), ("b".into(), "bs".into())],
            verbs: vec!["v".into()],
            auxiliaries: vec![("x".into(), "xs".into())],
            determiners: vec!["d".into()],
            prepositions: vec!["p".into()],
        };
        let train = generate_corpus(&SynthConfig::new(40, 20, 0.5, 9), &lex).unwrap();
        let pairs = generate_test_pairs_excluding(&mut rng(1), &lex, 1, Some(&train));
        let banned: HashSet<String> = train
            .sentences
            .iter()
            .filter_map(|s| s.rc.map(|rc| s.tokens[..=rc.rc_aux].join(" ")))
            .collect();
        if let Ok(pairs) = pairs {
            for p in pairs {
                assert!(!banned.contains(&p.high_agree.join(" ")));
                assert!(!banned.contains(&p.low_agree.join(" ")));
            }
        }
    }
}

//! Vocabulary construction, id encoding and deterministic corpus splits.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
/// Sentence boundary: fed as the first input and predicted after the last word.
pub const EOS: &str = "<eos>";

const ENCODED_MAGIC: &[u8; 4] = b"ALME";
const ENCODED_VERSION: u16 = 1;
/// Reserved delimiter id written between sentences of an encoded corpus.
pub const SENTENCE_DELIMITER: u32 = u32::MAX;

/// Frequency-ranked word/id mapping. Id 0 is [`UNK`], id 1 is [`EOS`];
/// kept words follow in rank order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub const UNK_ID: u32 = 0;
    pub const EOS_ID: u32 = 1;

    /// Build from an explicit word list (specials are added if absent).
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![UNK.to_string(), EOS.to_string()];
        for w in words {
            let w = w.into();
            if w != UNK && w != EOS {
                all.push(w);
            }
        }
        let mut ids = HashMap::with_capacity(all.len());
        for (i, w) in all.iter().enumerate() {
            if ids.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(Vocab { words: all, ids })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unk_id(&self) -> u32 {
        Self::UNK_ID
    }

    pub fn eos_id(&self) -> u32 {
        Self::EOS_ID
    }

    pub fn id(&self, word: &str) -> u32 {
        self.ids.get(word).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Stable 64-bit digest of the ordered word list.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }

    /// One word per line in id order; the first line is the UNK token.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for w in &self.words {
            text.push_str(w);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(UNK) {
            return Err(Error::parse(path, 1, format!("first line must be `{UNK}`")));
        }
        if lines.next() != Some(EOS) {
            return Err(Error::parse(path, 2, format!("second line must be `{EOS}`")));
        }
        Vocab::from_words(lines.map(str::to_string))
    }
}

/// Keep the `max_size` most frequent word types (ties broken
/// lexicographically); everything else maps to UNK.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Vocab> {
    if max_size < 1 {
        return Err(Error::Config("vocabulary max_size must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for sentence in corpus {
        for w in sentence {
            let w = w.as_ref();
            if w != UNK && w != EOS {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocab::from_words(ranked.into_iter().map(|(w, _)| w))
}

/// Id-encoded sentences (no boundary tokens).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncodedCorpus {
    pub sentences: Vec<Vec<u32>>,
    pub vocab_hash: u64,
}

impl EncodedCorpus {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Binary layout: magic `ALME`, u16 version, u32 delimiter id, u64 vocab
    /// hash, u64 sentence count, then little-endian u32 ids with the
    /// delimiter after every sentence.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(ENCODED_MAGIC)?;
        w.write_all(&ENCODED_VERSION.to_le_bytes())?;
        w.write_all(&SENTENCE_DELIMITER.to_le_bytes())?;
        w.write_all(&self.vocab_hash.to_le_bytes())?;
        w.write_all(&(self.sentences.len() as u64).to_le_bytes())?;
        for s in &self.sentences {
            for id in s {
                w.write_all(&id.to_le_bytes())?;
            }
            w.write_all(&SENTENCE_DELIMITER.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
        if bytes.len() < 26 || &bytes[..4] != ENCODED_MAGIC {
            return Err(bad("not an encoded corpus"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != ENCODED_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let delim = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let vocab_hash = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[18..26].try_into().unwrap()) as usize;
        let body = &bytes[26..];
        if body.len() % 4 != 0 {
            return Err(bad("truncated id stream"));
        }
        let mut sentences = Vec::with_capacity(count);
        let mut cur = Vec::new();
        for chunk in body.chunks_exact(4) {
            let id = u32::from_le_bytes(chunk.try_into().unwrap());
            if id == delim {
                sentences.push(std::mem::take(&mut cur));
            } else {
                cur.push(id);
            }
        }
        if !cur.is_empty() || sentences.len() != count {
            return Err(bad("sentence count does not match header"));
        }
        Ok(EncodedCorpus {
            sentences,
            vocab_hash,
        })
    }
}

pub fn encode_sentence<S: AsRef<str>>(sentence: &[S], vocab: &Vocab) -> Vec<u32> {
    sentence.iter().map(|w| vocab.id(w.as_ref())).collect()
}

pub fn encode<S: AsRef<str>>(corpus: &[Vec<S>], vocab: &Vocab) -> EncodedCorpus {
    EncodedCorpus {
        sentences: corpus.iter().map(|s| encode_sentence(s, vocab)).collect(),
        vocab_hash: vocab.hash(),
    }
}

/// Map ids back to words; unknown ids decode to [`UNK`].
pub fn decode(ids: &[u32], vocab: &Vocab) -> Vec<String> {
    ids.iter()
        .map(|&i| vocab.word(i).unwrap_or(UNK).to_string())
        .collect()
}

/// Read a whitespace-tokenized text file, one sentence per line.
pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect())
}

pub fn write_tokenized<S: AsRef<str>>(corpus: &[Vec<S>], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for s in corpus {
        let line: Vec<&str> = s.iter().map(AsRef::as_ref).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, valid: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train,
            valid,
            test,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in [self.train, self.valid, self.test] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("split fraction {f} outside [0, 1]")));
            }
        }
        let sum = self.train + self.valid + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(0.8, 0.1, 0.1, 0)
    }
}

/// Shuffle with the spec's seed, then cut into train/valid/test. Valid and
/// test sizes are `floor(n * fraction)`; the remainder goes to train.
pub fn split_corpus<T: Clone>(corpus: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    spec.validate()?;
    let n = corpus.len();
    if n < 10 {
        return Err(Error::Input(format!("need at least 10 sentences to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let part = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let n_valid = part(spec.valid);
    let n_test = part(spec.test);
    let n_train = n - n_valid - n_test;
    let take = |range: std::ops::Range<usize>| -> Vec<T> {
        order[range].iter().map(|&i| corpus[i].clone()).collect()
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_valid),
        take(n_train + n_valid..n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(text: &str) -> Vec<Vec<String>> {
        text.lines()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn cutoff_above_type_count() {
        let c = sents("a b c\nd e a");
        let v = build_vocab(&c, 50_000).unwrap();
        assert_eq!(v.len(), 5 + 2);
        assert_eq!(v.word(0), Some(UNK));
    }

    #[test]
    fn frequency_cutoff_and_ties() {
        let c = sents("a a a b");
        let v = build_vocab(&c, 1).unwrap();
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.id("b"), Vocab::UNK_ID);

        let c = sents("b a b a");
        let v = build_vocab(&c, 1).unwrap();
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.get("b"), None);
    }

    #[test]
    fn zero_max_size_is_a_config_error() {
        assert!(matches!(build_vocab(&sents("a"), 0), Err(Error::Config(_))));
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(build_vocab(&empty, 3), Err(Error::Input(_))));
    }

    #[test]
    fn oov_decodes_to_unk() {
        let v = build_vocab(&sents("the cat sat"), 10).unwrap();
        let ids = encode_sentence(&["the", "dog", "sat"], &v);
        assert_eq!(decode(&ids, &v), vec!["the", UNK, "sat"]);
        let ids = encode_sentence(&["the", "cat"], &v);
        assert_eq!(decode(&ids, &v), vec!["the", "cat"]);
    }

    #[test]
    fn split_sizes() {
        let c: Vec<usize> = (0..100).collect();
        let (a, b, t) = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 1)).unwrap();
        assert_eq!((a.len(), b.len(), t.len()), (80, 10, 10));
        let c: Vec<usize> = (0..101).collect();
        let (a, b, t) = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 1)).unwrap();
        assert_eq!((a.len(), b.len(), t.len()), (81, 10, 10));
        let again = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 1)).unwrap();
        assert_eq!((a, b, t), again);
    }

    #[test]
    fn split_errors() {
        let c: Vec<usize> = (0..100).collect();
        assert!(matches!(
            split_corpus(&c, &SplitSpec::new(1.1, -0.1, 0.0, 1)),
            Err(Error::Config(_))
        ));
        assert!(split_corpus(&c[..9], &SplitSpec::default()).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = build_vocab(&sents("x y y z z z"), 10).unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<unk>\n<eos>\nz\ny\nx\n"));
        assert_eq!(Vocab::load(&p).unwrap(), v);
    }

    #[test]
    fn encoded_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = build_vocab(&sents("x y y z z z"), 10).unwrap();
        let e = encode(&sents("x y\nz\nq z y"), &v);
        let p = dir.path().join("c.bin");
        e.save(&p).unwrap();
        assert_eq!(EncodedCorpus::load(&p).unwrap(), e);
    }
}

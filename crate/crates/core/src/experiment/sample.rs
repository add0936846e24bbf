//! A small procedurally generated "natural" corpus for exercising the
//! replication pipeline without Wikipedia-scale data.
//!
//! Sentences come from a handful of phrase-structure rules over the bundled
//! stimulus vocabulary: the template preambles, the noun lists and the nouns
//! of the item sets. Subject-verb agreement is respected everywhere; relative
//! clauses attached to a complex nominal agree with either nominal at random.
//! English also gets object relative clauses (`the N that the N saw`) with the
//! embedded verbs of the blocked-attachment templates.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lang::{Gender, Language, Number};
use crate::stimuli::{
    default_blocked_templates, default_items, default_nouns, default_templates, realize_np, rc_verb, NounEntry, StimulusPair, TemplateToken,
};

struct Inventory {
    language: Language,
    nouns: Vec<NounEntry>,
    preambles: Vec<Vec<String>>,
    relativizer: &'static str,
    linker: &'static str,
    predicates: &'static [&'static str],
    verbs: &'static [(&'static str, &'static str)],
    tails: &'static [&'static str],
    /// Past-tense verbs for object relative clauses (English only).
    object_rc_verbs: Vec<String>,
}

const EN_PREDICATES: &[&str] = &[
    "divorced", "sick", "there", "happy", "tired", "late", "rich", "famous", "angry", "alone", "away", "ready",
];
const EN_VERBS: &[(&str, &str)] = &[
    ("sees", "see"),
    ("likes", "like"),
    ("knows", "know"),
    ("meets", "meet"),
    ("helps", "help"),
    ("visits", "visit"),
    ("calls", "call"),
    ("admires", "admire"),
];
const EN_TAILS: &[&str] = &["yesterday", "today", "again", "often"];

const ES_PREDICATES: &[&str] = &["allí", "aquí", "fuera", "lejos", "cerca", "tranquilo", "enfermo", "cansado"];
const ES_VERBS: &[(&str, &str)] = &[
    ("ve", "ven"),
    ("conoce", "conocen"),
    ("ayuda", "ayudan"),
    ("visita", "visitan"),
    ("llama", "llaman"),
    ("admira", "admiran"),
    ("busca", "buscan"),
    ("espera", "esperan"),
];
const ES_TAILS: &[&str] = &["ayer", "hoy", "otra", "siempre"];

impl Inventory {
    fn new(language: Language) -> Result<Self> {
        let (relativizer, linker, predicates, verbs, tails) = match language {
            Language::English => ("that", "of", EN_PREDICATES, EN_VERBS, EN_TAILS),
            Language::Spanish => ("que", "de", ES_PREDICATES, ES_VERBS, ES_TAILS),
            Language::Synthetic => {
                return Err(Error::Config("the sample corpus exists for English and Spanish only".into()))
            }
        };
        let mut nouns = default_nouns(language);
        let known: BTreeSet<String> = nouns.iter().map(|n| n.singular.clone()).collect();
        for n in item_nouns(&default_items(language), language) {
            if !known.contains(&n.singular) {
                nouns.push(n);
            }
        }
        let preambles = default_templates(language)
            .iter()
            .map(|t| {
                t.tokens
                    .iter()
                    .take_while(|tok| !matches!(tok, TemplateToken::HighNp))
                    .filter_map(|tok| match tok {
                        TemplateToken::Word(w) => Some(w.clone()),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let mut object_rc_verbs: Vec<String> = Vec::new();
        if language == Language::English {
            for t in default_blocked_templates() {
                for w in t.tokens.windows(2) {
                    if let [TemplateToken::LowNp, TemplateToken::Word(v)] = w {
                        if !object_rc_verbs.contains(v) {
                            object_rc_verbs.push(v.clone());
                        }
                    }
                }
            }
        }
        Ok(Inventory {
            object_rc_verbs,
            language,
            nouns,
            preambles,
            relativizer,
            linker,
            predicates,
            verbs,
            tails,
        })
    }

    fn number<R: Rng>(rng: &mut R) -> Number {
        if rng.random_bool(0.5) {
            Number::Singular
        } else {
            Number::Plural
        }
    }

    fn np<R: Rng>(&self, rng: &mut R, number: Number, after_linker: bool, out: &mut Vec<String>) {
        let noun = self.nouns.choose(rng).unwrap();
        out.extend(realize_np(noun, number, self.language, after_linker).expect("inventory nouns carry gender"));
    }

    /// `NP (of NP)` with an optional relative clause. Returns the numbers of
    /// the nominals for agreement.
    fn complex_np<R: Rng>(&self, rng: &mut R, out: &mut Vec<String>) -> Number {
        let head = Self::number(rng);
        // A preamble ending in `de` hands the preposition to the NP so that
        // `de el` contracts.
        let after_de = self.language == Language::Spanish && out.last().is_some_and(|w| w == "de");
        if after_de {
            out.pop();
        }
        self.np(rng, head, after_de, out);
        if rng.random_bool(0.35) {
            let low = Self::number(rng);
            if self.language == Language::English {
                out.push(self.linker.to_string());
            }
            self.np(rng, low, self.language == Language::Spanish, out);
            if rng.random_bool(0.3) {
                let host = if rng.random_bool(0.5) { head } else { low };
                out.push(self.relativizer.to_string());
                out.push(rc_verb(self.language, host).to_string());
                out.push(self.predicates.choose(rng).unwrap().to_string());
            }
        } else if rng.random_bool(0.15) {
            out.push(self.relativizer.to_string());
            out.push(rc_verb(self.language, head).to_string());
            out.push(self.predicates.choose(rng).unwrap().to_string());
        } else if !self.object_rc_verbs.is_empty() && rng.random_bool(0.1) {
            out.push(self.relativizer.to_string());
            let n = Self::number(rng);
            self.np(rng, n, false, out);
            out.push(self.object_rc_verbs.choose(rng).unwrap().clone());
        }
        head
    }

    fn sentence<R: Rng>(&self, rng: &mut R) -> Vec<String> {
        let mut out = Vec::with_capacity(16);
        if rng.random_bool(0.4) {
            out.extend(self.preambles.choose(rng).unwrap().iter().cloned());
            self.complex_np(rng, &mut out);
        } else {
            let subject = self.complex_np(rng, &mut out);
            if rng.random_bool(0.5) {
                out.push(rc_verb(self.language, subject).to_string());
                out.push(self.predicates.choose(rng).unwrap().to_string());
            } else {
                let (sg, pl) = self.verbs.choose(rng).unwrap();
                out.push(if subject == Number::Singular { sg } else { pl }.to_string());
                self.complex_np(rng, &mut out);
            }
        }
        if rng.random_bool(0.25) {
            out.push(self.tails.choose(rng).unwrap().to_string());
        }
        out
    }
}

/// Nouns found in item pairs: positions where the two members differ hold
/// the singular and plural forms of the same lemma.
pub fn item_nouns(pairs: &[StimulusPair], language: Language) -> Vec<NounEntry> {
    const DETS: [&str; 4] = ["el", "la", "los", "las"];
    let mut out: Vec<NounEntry> = Vec::new();
    for p in pairs {
        let a = crate::stimuli::expand_contractions(&p.high_agree);
        let b = crate::stimuli::expand_contractions(&p.low_agree);
        if a.len() != b.len() {
            continue;
        }
        for i in 0..a.len() {
            if a[i] == b[i] || DETS.contains(&a[i]) {
                continue;
            }
            // The singular member is the one preceded by a singular
            // determiner (Spanish) or, in English, the one without a
            // plural -s, falling back to the shorter form.
            let (sg, pl, gender) = if language == Language::Spanish {
                let det = |w: &[&str]| if i > 0 { w[i - 1].to_string() } else { String::new() };
                let (da, db) = (det(&a), det(&b));
                let gender = |d: &str| match d {
                    "la" | "las" => Some(Gender::Feminine),
                    _ => Some(Gender::Masculine),
                };
                if da == "el" || da == "la" {
                    (a[i], b[i], gender(&da))
                } else {
                    (b[i], a[i], gender(&db))
                }
            } else if b[i].ends_with('s') && !a[i].ends_with('s') || a[i].len() < b[i].len() {
                (a[i], b[i], None)
            } else {
                (b[i], a[i], None)
            };
            if !out.iter().any(|n| n.singular == sg) {
                out.push(NounEntry {
                    singular: sg.to_string(),
                    plural: pl.to_string(),
                    gender,
                });
            }
        }
    }
    out
}

/// Generate sentences until at least `target_tokens` tokens exist.
pub fn sample_corpus(language: Language, target_tokens: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if target_tokens == 0 {
        return Err(Error::Config("sample corpus needs a positive token count".into()));
    }
    let inv = Inventory::new(language)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut tokens = 0;
    while tokens < target_tokens {
        let s = inv.sentence(&mut rng);
        tokens += s.len();
        out.push(s);
    }
    Ok(out)
}

//! Evaluation stimuli: minimal pairs that differ only in which nominal agrees
//! in number with the relative-clause verb.
//!
//! Pairs come from two places. Hand-written item sets are loaded from TSV
//! files ([`load_stimulus_file`]); larger sets are produced by substituting
//! every ordered pair of distinct nouns into preamble templates
//! ([`expand_attachment_templates`], [`expand_blocked_templates`]).

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lang::{Gender, Language, Number};

pub const DEFAULT_ENGLISH_NOUNS: &str = include_str!("../data/nouns_en.tsv");
pub const DEFAULT_SPANISH_NOUNS: &str = include_str!("../data/nouns_es.tsv");
pub const DEFAULT_ENGLISH_TEMPLATES: &str = include_str!("../data/templates_en.txt");
pub const DEFAULT_SPANISH_TEMPLATES: &str = include_str!("../data/templates_es.txt");
pub const DEFAULT_ENGLISH_BLOCKED_TEMPLATES: &str = include_str!("../data/blocked_templates_en.txt");
pub const DEFAULT_ENGLISH_ITEMS: &str = include_str!("../data/items_en.tsv");
pub const DEFAULT_SPANISH_ITEMS: &str = include_str!("../data/items_es.tsv");

/// Which member of a pair an annotation or row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    /// RC verb agrees in number with the higher nominal.
    HighAgree,
    /// RC verb agrees in number with the lower nominal.
    LowAgree,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::HighAgree => "high_agree",
            Condition::LowAgree => "low_agree",
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high_agree" => Ok(Condition::HighAgree),
            "low_agree" => Ok(Condition::LowAgree),
            other => Err(Error::Data(format!("unknown condition `{other}`"))),
        }
    }
}

/// Optional provenance of a generated pair; not carried by the TSV format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMeta {
    pub noun_high: String,
    pub noun_low: String,
    pub verb_number: Number,
}

/// Two sentences that differ only in the number marking of the two nominals.
///
/// Both members end in (or contain) the same RC verb at their target index.
/// In Spanish the `de el -> del` contraction can make the members differ in
/// length by one token, so each member carries its own target index.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusPair {
    pub id: String,
    pub template_id: String,
    pub language: Language,
    pub high_agree: Vec<String>,
    pub low_agree: Vec<String>,
    pub target_high: usize,
    pub target_low: usize,
    pub meta: Option<PairMeta>,
}

impl StimulusPair {
    pub fn target_token(&self) -> &str {
        &self.high_agree[self.target_high]
    }

    /// Exchange the two members.
    pub fn swapped(&self) -> StimulusPair {
        StimulusPair {
            high_agree: self.low_agree.clone(),
            low_agree: self.high_agree.clone(),
            target_high: self.target_low,
            target_low: self.target_high,
            ..self.clone()
        }
    }

    /// Check the structural invariants of a pair.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("pair {}: {msg}", self.id)));
        if self.target_high >= self.high_agree.len() || self.target_low >= self.low_agree.len() {
            return bad("target index out of range".into());
        }
        if self.high_agree[self.target_high] != self.low_agree[self.target_low] {
            return bad(format!(
                "target tokens differ: `{}` vs `{}`",
                self.high_agree[self.target_high], self.low_agree[self.target_low]
            ));
        }
        let a = expand_contractions(&self.high_agree);
        let b = expand_contractions(&self.low_agree);
        if a.len() != b.len() {
            return bad(format!(
                "members differ in length ({} vs {} tokens)",
                self.high_agree.len(),
                self.low_agree.len()
            ));
        }
        Ok(())
    }
}

/// Undo `del` contractions so Spanish pairs can be compared position by position.
pub fn expand_contractions(tokens: &[String]) -> Vec<&str> {
    let mut out = Vec::with_capacity(tokens.len() + 1);
    for t in tokens {
        if t == "del" {
            out.push("de");
            out.push("el");
        } else {
            out.push(t.as_str());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounEntry {
    pub singular: String,
    pub plural: String,
    pub gender: Option<Gender>,
}

impl NounEntry {
    pub fn form(&self, number: Number) -> &str {
        match number {
            Number::Singular => &self.singular,
            Number::Plural => &self.plural,
        }
    }
}

/// Parse a noun list: `singular<TAB>plural[<TAB>gender]`, `#` comments.
pub fn parse_nouns(text: &str, source: &Path) -> Result<Vec<NounEntry>> {
    let mut nouns = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(
                source,
                i + 1,
                format!("noun entry `{line}` is missing its singular or plural form"),
            ));
        }
        if fields[0] == fields[1] {
            return Err(Error::parse(
                source,
                i + 1,
                format!("noun entry `{line}` has identical singular and plural forms"),
            ));
        }
        let gender = match fields.get(2) {
            Some(g) if !g.is_empty() => {
                Some(Gender::from_str(g).map_err(|e| Error::parse(source, i + 1, e.to_string()))?)
            }
            _ => None,
        };
        nouns.push(NounEntry {
            singular: fields[0].to_string(),
            plural: fields[1].to_string(),
            gender,
        });
    }
    Ok(nouns)
}

pub fn load_nouns(path: &Path) -> Result<Vec<NounEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nouns(&text, path)
}

pub fn default_nouns(language: Language) -> Vec<NounEntry> {
    let (text, name) = match language {
        Language::Spanish => (DEFAULT_SPANISH_NOUNS, "nouns_es.tsv"),
        _ => (DEFAULT_ENGLISH_NOUNS, "nouns_en.tsv"),
    };
    parse_nouns(text, Path::new(name)).expect("bundled noun list is well formed")
}

/// The RC verb for a language and number.
pub fn rc_verb(language: Language, number: Number) -> &'static str {
    match (language, number) {
        (Language::Spanish, Number::Singular) => "estaba",
        (Language::Spanish, Number::Plural) => "estaban",
        (_, Number::Singular) => "was",
        (_, Number::Plural) => "were",
    }
}

/// Surface form of a determiner + noun phrase.
///
/// English always uses `the`. Spanish picks `el/la/los/las` from gender and
/// number; when the phrase follows `de` the preposition is included in the
/// output and `de el` contracts to `del`.
pub fn realize_np(
    noun: &NounEntry,
    number: Number,
    language: Language,
    after_de: bool,
) -> Result<Vec<String>> {
    let form = noun.form(number).to_string();
    match language {
        Language::English | Language::Synthetic => Ok(vec!["the".to_string(), form]),
        Language::Spanish => {
            let gender = noun.gender.ok_or_else(|| {
                Error::Data(format!("Spanish noun `{}` has no gender", noun.singular))
            })?;
            let det = match (gender, number) {
                (Gender::Masculine, Number::Singular) => "el",
                (Gender::Masculine, Number::Plural) => "los",
                (Gender::Feminine, Number::Singular) => "la",
                (Gender::Feminine, Number::Plural) => "las",
            };
            Ok(match (after_de, det) {
                (true, "el") => vec!["del".to_string(), form],
                (true, det) => vec!["de".to_string(), det.to_string(), form],
                (false, det) => vec![det.to_string(), form],
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateToken {
    Word(String),
    HighNp,
    LowNp,
    RcVerb,
}

/// A preamble with two noun-phrase slots and a final RC-verb slot, e.g.
/// `Everybody ignored {NP1} of {NP2} that {V}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusTemplate {
    pub id: String,
    pub language: Language,
    pub tokens: Vec<TemplateToken>,
}

impl StimulusTemplate {
    pub fn parse(id: &str, language: Language, text: &str) -> Result<Self> {
        let tokens: Vec<TemplateToken> = text
            .split_whitespace()
            .map(|t| match t {
                "{NP1}" => TemplateToken::HighNp,
                "{NP2}" => TemplateToken::LowNp,
                "{V}" => TemplateToken::RcVerb,
                w => TemplateToken::Word(w.to_string()),
            })
            .collect();
        let count = |k: &TemplateToken| tokens.iter().filter(|t| *t == k).count();
        if count(&TemplateToken::HighNp) != 1
            || count(&TemplateToken::LowNp) != 1
            || count(&TemplateToken::RcVerb) != 1
        {
            return Err(Error::Data(format!(
                "template {id} must contain {{NP1}}, {{NP2}} and {{V}} exactly once"
            )));
        }
        if tokens.last() != Some(&TemplateToken::RcVerb) {
            return Err(Error::Data(format!("template {id}: {{V}} must be the final token")));
        }
        let hi = tokens.iter().position(|t| *t == TemplateToken::HighNp).unwrap();
        let lo = tokens.iter().position(|t| *t == TemplateToken::LowNp).unwrap();
        if hi > lo {
            return Err(Error::Data(format!("template {id}: {{NP1}} must precede {{NP2}}")));
        }
        Ok(StimulusTemplate {
            id: id.to_string(),
            language,
            tokens,
        })
    }

    /// Fill the slots. Returns the tokens and the index of the RC verb.
    pub fn realize(
        &self,
        high: (&NounEntry, Number),
        low: (&NounEntry, Number),
        verb_number: Number,
    ) -> Result<(Vec<String>, usize)> {
        let spanish = self.language == Language::Spanish;
        let mut out: Vec<String> = Vec::with_capacity(self.tokens.len() + 4);
        for tok in &self.tokens {
            match tok {
                TemplateToken::Word(w) => out.push(w.clone()),
                TemplateToken::HighNp | TemplateToken::LowNp => {
                    let (noun, number) = if *tok == TemplateToken::HighNp { high } else { low };
                    let after_de = spanish && out.last().is_some_and(|w| w == "de");
                    if after_de {
                        out.pop();
                    }
                    out.extend(realize_np(noun, number, self.language, after_de)?);
                }
                TemplateToken::RcVerb => out.push(rc_verb(self.language, verb_number).to_string()),
            }
        }
        let target = out.len() - 1;
        Ok((out, target))
    }

    fn has_relativizer_between_slots(&self) -> bool {
        let hi = self.tokens.iter().position(|t| *t == TemplateToken::HighNp).unwrap();
        let lo = self.tokens.iter().position(|t| *t == TemplateToken::LowNp).unwrap();
        self.tokens[hi + 1..lo]
            .iter()
            .any(|t| matches!(t, TemplateToken::Word(w) if w == "that" || w == "que" || w == "who"))
    }
}

/// Parse a template file: one `id<TAB>template` per line, `#` comments.
pub fn parse_templates(text: &str, language: Language, source: &Path) -> Result<Vec<StimulusTemplate>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, i + 1, "expected `id<TAB>template`"))?;
        out.push(
            StimulusTemplate::parse(id.trim(), language, body)
                .map_err(|e| Error::parse(source, i + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn load_templates(path: &Path, language: Language) -> Result<Vec<StimulusTemplate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text, language, path)
}

pub fn default_templates(language: Language) -> Vec<StimulusTemplate> {
    let (text, name) = match language {
        Language::Spanish => (DEFAULT_SPANISH_TEMPLATES, "templates_es.txt"),
        _ => (DEFAULT_ENGLISH_TEMPLATES, "templates_en.txt"),
    };
    parse_templates(text, language, Path::new(name)).expect("bundled templates are well formed")
}

pub fn default_blocked_templates() -> Vec<StimulusTemplate> {
    parse_templates(
        DEFAULT_ENGLISH_BLOCKED_TEMPLATES,
        Language::English,
        Path::new("blocked_templates_en.txt"),
    )
    .expect("bundled templates are well formed")
}

fn check_nouns(nouns: &[NounEntry], language: Language) -> Result<()> {
    for n in nouns {
        if n.singular.is_empty() || n.plural.is_empty() {
            return Err(Error::Data(format!(
                "noun entry `{}`/`{}` is missing a form",
                n.singular, n.plural
            )));
        }
        if language == Language::Spanish && n.gender.is_none() {
            return Err(Error::Data(format!("Spanish noun `{}` has no gender", n.singular)));
        }
    }
    Ok(())
}

fn expand(templates: &[StimulusTemplate], nouns: &[NounEntry], language: Language) -> Result<Vec<StimulusPair>> {
    if templates.is_empty() {
        return Err(Error::Input("no templates supplied".into()));
    }
    check_nouns(nouns, language)?;
    for t in templates {
        if t.language != language {
            return Err(Error::Config(format!(
                "template {} is {}, expected {}",
                t.id, t.language, language
            )));
        }
    }
    let n = nouns.len();
    let mut pairs = Vec::with_capacity(templates.len() * n * n.saturating_sub(1) * 2);
    for t in templates {
        for (i, hi) in nouns.iter().enumerate() {
            for (j, lo) in nouns.iter().enumerate() {
                if i == j {
                    continue;
                }
                for verb_number in [Number::Singular, Number::Plural] {
                    let (high_agree, target_high) =
                        t.realize((hi, verb_number), (lo, verb_number.flip()), verb_number)?;
                    let (low_agree, target_low) =
                        t.realize((hi, verb_number.flip()), (lo, verb_number), verb_number)?;
                    pairs.push(StimulusPair {
                        id: format!("{}-{}-{}-{}", t.id, hi.singular, lo.singular, verb_number),
                        template_id: t.id.clone(),
                        language,
                        high_agree,
                        low_agree,
                        target_high,
                        target_low,
                        meta: Some(PairMeta {
                            noun_high: hi.singular.clone(),
                            noun_low: lo.singular.clone(),
                            verb_number,
                        }),
                    });
                }
            }
        }
    }
    Ok(pairs)
}

/// Substitute every ordered pair of distinct nouns into every template, with
/// both RC-verb numbers. Each (template, noun pair) yields the four sentences
/// of one item, organised as two pairs, so the sentence count is
/// `T * n * (n - 1) * 4`.
pub fn expand_attachment_templates(
    templates: &[StimulusTemplate],
    nouns: &[NounEntry],
    language: Language,
) -> Result<Vec<StimulusPair>> {
    expand(templates, nouns, language)
}

/// Like [`expand_attachment_templates`], but for templates in which the lower
/// nominal sits inside an intervening relative clause and cannot host the
/// final RC. The high-agree member is the grammatical one.
pub fn expand_blocked_templates(
    templates: &[StimulusTemplate],
    nouns: &[NounEntry],
    language: Language,
) -> Result<Vec<StimulusPair>> {
    for t in templates {
        if !t.has_relativizer_between_slots() {
            return Err(Error::Data(format!(
                "template {} has no relative clause between {{NP1}} and {{NP2}}",
                t.id
            )));
        }
    }
    expand(templates, nouns, language)
}

const TSV_HEADER: &str = "item_id\ttemplate_id\tcondition\tlanguage\tsentence\ttarget_index";

/// Write pairs as TSV, two rows per pair (high_agree first).
pub fn save_stimulus_file(pairs: &[StimulusPair], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_stimuli(pairs, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_stimuli<W: Write>(pairs: &[StimulusPair], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{TSV_HEADER}")?;
    for p in pairs {
        for (cond, toks, target) in [
            (Condition::HighAgree, &p.high_agree, p.target_high),
            (Condition::LowAgree, &p.low_agree, p.target_low),
        ] {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                p.id,
                p.template_id,
                cond.as_str(),
                p.language,
                toks.join(" "),
                target
            )?;
        }
    }
    Ok(())
}

pub fn load_stimulus_file(path: &Path) -> Result<Vec<StimulusPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_stimuli(&text, path)
}

struct Row {
    line: usize,
    item: String,
    template: String,
    condition: Condition,
    language: Language,
    tokens: Vec<String>,
    target: usize,
}

/// Parse stimulus TSV text. Rows of one item must be adjacent.
pub fn parse_stimuli(text: &str, source: &Path) -> Result<Vec<StimulusPair>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == TSV_HEADER => {}
        _ => return Err(Error::parse(source, 1, format!("expected header `{TSV_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::parse(source, i + 1, format!("expected 6 columns, found {}", f.len())));
        }
        let condition = Condition::from_str(f[2]).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
        let language = Language::from_str(f[3]).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
        let tokens: Vec<String> = f[4].split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
        let target: usize = f[5]
            .parse()
            .map_err(|_| Error::parse(source, i + 1, format!("bad target_index `{}`", f[5])))?;
        if target >= tokens.len() {
            return Err(Error::parse(
                source,
                i + 1,
                format!("target_index {target} outside a {}-token sentence", tokens.len()),
            ));
        }
        rows.push(Row {
            line: i + 1,
            item: f[0].to_string(),
            template: f[1].to_string(),
            condition,
            language,
            tokens,
            target,
        });
    }
    if rows.len() % 2 != 0 {
        return Err(Error::parse(source, rows.last().map_or(1, |r| r.line), "odd number of rows; every item needs both conditions"));
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(rows.len() / 2);
    let mut it = rows.into_iter();
    while let (Some(a), Some(b)) = (it.next(), it.next()) {
        if a.item != b.item || a.condition == b.condition {
            return Err(Error::parse(
                source,
                b.line,
                format!("item `{}` must have one high_agree and one low_agree row on adjacent lines", a.item),
            ));
        }
        if a.language != b.language || a.template != b.template {
            return Err(Error::parse(source, b.line, format!("item `{}` rows disagree on template or language", a.item)));
        }
        if !seen.insert(a.item.clone()) {
            return Err(Error::parse(source, a.line, format!("duplicate item `{}`", a.item)));
        }
        let (hi, lo) = if a.condition == Condition::HighAgree { (a, b) } else { (b, a) };
        let pair = StimulusPair {
            id: hi.item,
            template_id: hi.template,
            language: hi.language,
            high_agree: hi.tokens,
            low_agree: lo.tokens,
            target_high: hi.target,
            target_low: lo.target,
            meta: None,
        };
        pair.validate()
            .map_err(|e| Error::parse(source, lo.line, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// The bundled 24-item direct-replication set for a language.
pub fn default_items(language: Language) -> Vec<StimulusPair> {
    let (text, name) = match language {
        Language::Spanish => (DEFAULT_SPANISH_ITEMS, "items_es.tsv"),
        _ => (DEFAULT_ENGLISH_ITEMS, "items_en.tsv"),
    };
    parse_stimuli(text, Path::new(name)).expect("bundled item set is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noun(sg: &str, pl: &str, g: Option<Gender>) -> NounEntry {
        NounEntry {
            singular: sg.into(),
            plural: pl.into(),
            gender: g,
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn spanish_np_contracts_after_de() {
        let maestro = noun("maestro", "maestros", Some(Gender::Masculine));
        assert_eq!(
            realize_np(&maestro, Number::Singular, Language::Spanish, true).unwrap(),
            toks("del maestro")
        );
        assert_eq!(
            realize_np(&maestro, Number::Plural, Language::Spanish, true).unwrap(),
            toks("de los maestros")
        );
        let casa = noun("casa", "casas", Some(Gender::Feminine));
        assert_eq!(realize_np(&casa, Number::Singular, Language::Spanish, true).unwrap(), toks("de la casa"));
        assert_eq!(realize_np(&casa, Number::Plural, Language::Spanish, false).unwrap(), toks("las casas"));
    }

    #[test]
    fn english_np_uses_the() {
        let teacher = noun("teacher", "teachers", None);
        assert_eq!(realize_np(&teacher, Number::Singular, Language::English, false).unwrap(), toks("the teacher"));
        assert_eq!(realize_np(&teacher, Number::Plural, Language::English, true).unwrap(), toks("the teachers"));
    }

    #[test]
    fn spanish_np_without_gender_is_a_data_error() {
        let n = noun("sobrino", "sobrinos", None);
        assert!(matches!(
            realize_np(&n, Number::Singular, Language::Spanish, false),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn building_system_quadruple() {
        let t = StimulusTemplate::parse("t1", Language::English, "Everybody ignored {NP1} of {NP2} that {V}").unwrap();
        let nouns = vec![noun("system", "systems", None), noun("building", "buildings", None)];
        let pairs = expand_attachment_templates(&[t], &nouns, Language::English).unwrap();
        assert_eq!(pairs.len(), 4);
        let sg = &pairs[0];
        assert_eq!(sg.high_agree.join(" "), "Everybody ignored the system of the buildings that was");
        assert_eq!(sg.low_agree.join(" "), "Everybody ignored the systems of the building that was");
        let pl = &pairs[1];
        assert_eq!(pl.high_agree.join(" "), "Everybody ignored the systems of the building that were");
        assert_eq!(pl.low_agree.join(" "), "Everybody ignored the system of the buildings that were");
        for p in &pairs {
            p.validate().unwrap();
            assert_eq!(p.target_high, 8);
        }
    }

    #[test]
    fn spanish_expansion_matches_hand_built_pair() {
        let t = StimulusTemplate::parse("t1", Language::Spanish, "Andrés cenó ayer con {NP1} de {NP2} que {V}").unwrap();
        let nouns = vec![
            noun("sobrino", "sobrinos", Some(Gender::Masculine)),
            noun("maestro", "maestros", Some(Gender::Masculine)),
        ];
        let pairs = expand_attachment_templates(&[t], &nouns, Language::Spanish).unwrap();
        assert_eq!(
            pairs[0].high_agree.join(" "),
            "Andrés cenó ayer con el sobrino de los maestros que estaba"
        );
        assert_eq!(pairs[0].low_agree.join(" "), "Andrés cenó ayer con los sobrinos del maestro que estaba");
        assert_eq!(pairs[0].target_high, 10);
        assert_eq!(pairs[0].target_low, 9);
        pairs[0].validate().unwrap();
    }

    #[test]
    fn single_noun_yields_nothing() {
        let t = default_templates(Language::English);
        let nouns = vec![noun("system", "systems", None)];
        assert!(expand_attachment_templates(&t, &nouns, Language::English).unwrap().is_empty());
    }

    #[test]
    fn template_validation() {
        assert!(StimulusTemplate::parse("a", Language::English, "the {NP1} {V}").is_err());
        assert!(StimulusTemplate::parse("a", Language::English, "{NP1} of {NP2} that {V} now").is_err());
        assert!(StimulusTemplate::parse("a", Language::English, "{NP2} of {NP1} that {V}").is_err());
    }

    #[test]
    fn blocked_templates_need_an_intervening_rc() {
        let t = StimulusTemplate::parse("t", Language::English, "Everybody ignored {NP1} of {NP2} that {V}").unwrap();
        let nouns = default_nouns(Language::English);
        assert!(expand_blocked_templates(&[t], &nouns[..3], Language::English).is_err());

        let b = StimulusTemplate::parse("b", Language::English, "Everybody ignored {NP1} that {NP2} hated that {V}").unwrap();
        let nouns = vec![noun("boy", "boys", None), noun("girl", "girls", None)];
        let pairs = expand_blocked_templates(&[b], &nouns, Language::English).unwrap();
        assert_eq!(pairs[0].high_agree.join(" "), "Everybody ignored the boy that the girls hated that was");
        assert_eq!(pairs[0].low_agree.join(" "), "Everybody ignored the boys that the girl hated that was");
    }

    #[test]
    fn missing_gender_names_the_entry() {
        let t = default_templates(Language::Spanish);
        let nouns = vec![
            noun("sobrino", "sobrinos", Some(Gender::Masculine)),
            noun("caja", "cajas", None),
        ];
        let err = expand_attachment_templates(&t, &nouns, Language::Spanish).unwrap_err();
        assert!(err.to_string().contains("caja"), "{err}");
    }

    #[test]
    fn loader_rejects_length_mismatch() {
        let text = format!(
            "{TSV_HEADER}\n\
             i1\tt\thigh_agree\tenglish\tthe man of the boys that was\t6\n\
             i1\tt\tlow_agree\tenglish\tthe men of boy that was\t5\n"
        );
        let err = parse_stimuli(&text, Path::new("x.tsv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn loader_rejects_target_mismatch_and_bad_rows() {
        let text = format!(
            "{TSV_HEADER}\n\
             i1\tt\thigh_agree\tenglish\tthe man of the boys that was\t6\n\
             i1\tt\tlow_agree\tenglish\tthe men of the boy that were\t6\n"
        );
        assert!(parse_stimuli(&text, Path::new("x.tsv")).is_err());
        let text = format!("{TSV_HEADER}\ni1\tt\thigh_agree\tenglish\tthe man\n");
        assert!(matches!(
            parse_stimuli(&text, Path::new("x.tsv")),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = format!("{TSV_HEADER}\ni1\tt\thigh_agree\tenglish\tthe man\t9\n");
        assert!(matches!(
            parse_stimuli(&text, Path::new("x.tsv")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn bundled_item_sets_have_24_pairs() {
        for lang in [Language::English, Language::Spanish] {
            let items = default_items(lang);
            assert_eq!(items.len(), 24);
            let singular = items.iter().filter(|p| p.target_token() == rc_verb(lang, Number::Singular)).count();
            assert_eq!(singular, 12);
        }
    }

    #[test]
    fn bundled_spanish_output_never_has_de_el() {
        let pairs = expand_attachment_templates(
            &default_templates(Language::Spanish),
            &default_nouns(Language::Spanish),
            Language::Spanish,
        )
        .unwrap();
        for p in &pairs {
            for s in [&p.high_agree, &p.low_agree] {
                assert!(!s.windows(2).any(|w| w[0] == "de" && w[1] == "el"), "{}", s.join(" "));
            }
        }
    }
}

//! Property tests for invariants that must hold for any input.

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rclab::corpus::{build_vocab, split_corpus, SplitSpec};
use rclab::eval::{aggregate_report, Coding, DeltaRecord, Evaluator};
use rclab::lang::{Language, Number};
use rclab::lm::{sentence_log_probs, Lstm, Params};
use rclab::stats::{jzs_bayes_factor, student_t_two_tailed};
use rclab::stimuli::{
    default_nouns, default_templates, expand_attachment_templates, expand_contractions, StimulusPair,
};
use rclab::synth::{generate_corpus, Construction, Lexicon, Sentence, SynthConfig, OF, THAT};

/// Rigid matcher for the two synthetic templates. Returns the construction
/// the tokens spell out, or `None` if they fit neither template.
///
///   filler: D N (P D N) (Aux) V (D N) (P D N)
///   RC:     D N Aux V D N of D N that was/were V
fn parse_back(lex: &Lexicon, t: &[String]) -> Option<Construction> {
    let noun_number = |w: &str| {
        lex.nouns.iter().find_map(|(s, p)| {
            if w == s {
                Some(Number::Singular)
            } else if w == p {
                Some(Number::Plural)
            } else {
                None
            }
        })
    };
    let aux_number = |w: &str, pairs: &[(String, String)]| {
        pairs.iter().find_map(|(s, p)| {
            if w == s {
                Some(Number::Singular)
            } else if w == p {
                Some(Number::Plural)
            } else {
                None
            }
        })
    };
    let is_det = |w: &str| lex.determiners.iter().any(|d| d == w);
    let is_verb = |w: &str| lex.verbs.iter().any(|v| v == w);
    let is_prep = |w: &str| lex.prepositions.iter().any(|p| p == w);
    let np = |i: usize| -> Option<Number> {
        if is_det(t.get(i)?) {
            noun_number(t.get(i + 1)?)
        } else {
            None
        }
    };

    // RC template.
    if t.len() == 12 && t[6] == OF && t[9] == THAT {
        let subj = np(0)?;
        let high = np(4)?;
        let low = np(7)?;
        if aux_number(&t[2], &lex.auxiliaries)? != subj || !is_verb(&t[3]) || !is_verb(&t[11]) {
            return None;
        }
        let rc = aux_number(&t[10], &lex.auxiliaries[..1])?;
        // Exactly one nominal agrees with the RC auxiliary.
        return match (high == rc, low == rc) {
            (true, false) => Some(Construction::RcHigh),
            (false, true) => Some(Construction::RcLow),
            _ => None,
        };
    }

    // Filler template.
    let subj = np(0)?;
    let mut i = 2;
    if t.get(i).is_some_and(|w| is_prep(w)) {
        np(i + 1)?;
        i += 3;
    }
    if let Some(n) = t.get(i).and_then(|w| aux_number(w, &lex.auxiliaries)) {
        if n != subj {
            return None;
        }
        i += 1;
    }
    if !is_verb(t.get(i)?) {
        return None;
    }
    i += 1;
    if t.get(i).is_some_and(|w| is_det(w)) {
        np(i)?;
        i += 2;
    }
    if t.get(i).is_some_and(|w| is_prep(w)) {
        np(i + 1)?;
        i += 3;
    }
    (i == t.len()).then_some(Construction::Filler)
}

fn corpus_bytes(c: &rclab::synth::Corpus) -> (Vec<u8>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("c.txt"), dir.path().join("a.tsv"));
    c.save(&a, &b).unwrap();
    (std::fs::read(a).unwrap(), std::fs::read(b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_corpora_are_exact_unambiguous_and_parse_back(
        size in 20usize..400,
        rc_frac in 0.0f64..=1.0,
        high in 0.0f64..=1.0,
        optional_p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let lex = Lexicon::default();
        let rc = (size as f64 * rc_frac) as usize;
        let mut cfg = SynthConfig::new(size, rc, high, seed);
        cfg.optional_p = optional_p;
        let corpus = generate_corpus(&cfg, &lex).unwrap();
        let (n_high, n_low) = cfg.rc_split();
        prop_assert_eq!(corpus.len(), size);
        prop_assert_eq!(corpus.count(Construction::RcHigh), n_high);
        prop_assert_eq!(corpus.count(Construction::RcLow), n_low);
        prop_assert_eq!(corpus.count(Construction::Filler), size - rc);
        let mut seen = HashSet::new();
        for s in &corpus.sentences {
            prop_assert_eq!(parse_back(&lex, &s.tokens), Some(s.construction), "{}", s.text());
            prop_assert!(seen.insert(s.text()));
        }
        let again = generate_corpus(&cfg, &lex).unwrap();
        prop_assert_eq!(corpus_bytes(&corpus), corpus_bytes(&again));
    }

    #[test]
    fn vocabulary_ignores_line_order(seed in any::<u64>(), max in 3usize..40) {
        let lex = Lexicon::default();
        let corpus: Vec<Vec<String>> = generate_corpus(&SynthConfig::new(200, 20, 0.5, seed), &lex)
            .unwrap()
            .token_lists();
        let mut shuffled = corpus.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert_eq!(build_vocab(&corpus, max).unwrap(), build_vocab(&shuffled, max).unwrap());
    }

    #[test]
    fn splits_partition_the_corpus(
        n in 10usize..500,
        valid in 0.0f64..0.5,
        test in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let items: Vec<usize> = (0..n).collect();
        let spec = SplitSpec::new(1.0 - valid - test, valid, test, seed);
        let (a, b, c) = split_corpus(&items, &spec).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), n);
        let all: BTreeSet<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        prop_assert_eq!(all.len(), n);
    }

    #[test]
    fn stimulus_count_law_and_pair_minimality(
        t in 1usize..4,
        n in 2usize..7,
        spanish in any::<bool>(),
    ) {
        let lang = if spanish { Language::Spanish } else { Language::English };
        let templates = &default_templates(lang)[..t];
        let nouns = &default_nouns(lang)[..n];
        let pairs = expand_attachment_templates(templates, nouns, lang).unwrap();
        prop_assert_eq!(2 * pairs.len(), t * n * (n - 1) * 4);
        for p in &pairs {
            prop_assert_eq!(p.target_token(), p.low_agree[p.target_low].as_str());
            let (a, b) = (expand_contractions(&p.high_agree), expand_contractions(&p.low_agree));
            prop_assert_eq!(a.len(), b.len());
            let allowed: BTreeSet<&str> = nouns
                .iter()
                .flat_map(|x| [x.singular.as_str(), x.plural.as_str()])
                .chain(["el", "la", "los", "las"])
                .collect();
            for (x, y) in a.iter().zip(&b) {
                if x != y {
                    prop_assert!(allowed.contains(x) && allowed.contains(y), "{x} / {y}");
                }
            }
            for s in [&p.high_agree, &p.low_agree] {
                prop_assert!(!s.windows(2).any(|w| w[0] == "de" && w[1] == "el"));
            }
        }
    }

    #[test]
    fn deltas_flip_under_member_swap_and_codings_survive_shifts(
        sh in 0.0f64..30.0,
        sl in 0.0f64..30.0,
        c in -5.0f64..5.0,
    ) {
        let pair = toy_pair();
        let d = DeltaRecord::new(&pair, None, sh, sl);
        let swapped = DeltaRecord::new(&pair.swapped(), None, sl, sh);
        prop_assert_eq!(swapped.delta, -d.delta);
        let shifted = DeltaRecord::new(&pair, None, sh + c.abs(), sl + c.abs());
        if (sh - sl).abs() > 1e-9 {
            prop_assert_eq!(shifted.coding, d.coding);
        }
    }

    #[test]
    fn proportions_sum_to_one_without_ties(deltas in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let pair = toy_pair();
        let records: Vec<DeltaRecord> = deltas.iter().map(|&d| DeltaRecord::new(&pair, Some(1), 1.0 + d, 1.0)).collect();
        let r = aggregate_report(&records).unwrap();
        let p = &r.pooled;
        if p.n_low + p.n_high > 0 {
            prop_assert!((p.prop_low().unwrap() + p.prop_high().unwrap() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(p.n_low + p.n_high + p.n_tie, deltas.len());
        prop_assert_eq!(p.n_tie, records.iter().filter(|r| r.coding == Coding::Tie).count());
    }

    #[test]
    fn p_values_fall_with_abs_t(t in 0.0f64..20.0, dt in 0.01f64..5.0, df in 1.0f64..200.0) {
        let p0 = student_t_two_tailed(t, df);
        let p1 = student_t_two_tailed(t + dt, df);
        prop_assert!(p1 <= p0);
        prop_assert_eq!(student_t_two_tailed(-t, df), p0);
        prop_assert!((student_t_two_tailed(0.0, df) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bayes_factor_is_even_in_t(t in 0.0f64..6.0, n in 2usize..200) {
        let a = jzs_bayes_factor(t, n, std::f64::consts::SQRT_2 / 2.0).unwrap();
        let b = jzs_bayes_factor(-t, n, std::f64::consts::SQRT_2 / 2.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lm_distributions_normalise_and_chain(seed in any::<u64>(), len in 1usize..8) {
        let vocab = 9usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Lstm::new(Params::<f32>::uniform(&mut rng, vocab, 5, 4, 2, 0.5));
        let sentence: Vec<u32> = (0..len).map(|i| 2 + ((seed as usize >> i) % (vocab - 2)) as u32).collect();

        // Every step's distribution sums to one.
        let mut state = model.zero_state(1);
        let mut stepwise = 0.0;
        let mut prev = 1u32;
        for &w in sentence.iter().chain(std::iter::once(&1)) {
            let probs = model.step(prev, &mut state).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            stepwise += probs[w as usize].ln();
            prev = w;
        }

        // Sentence log-probability is the sum of per-token log-probabilities,
        // and evaluation is repeatable.
        let lp = sentence_log_probs(&model, &[&sentence]).unwrap();
        let again = sentence_log_probs(&model, &[&sentence]).unwrap();
        prop_assert_eq!(&lp, &again);
        prop_assert!((lp[0].iter().sum::<f64>() - stepwise).abs() < 1e-6);

        let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
        let v = rclab::corpus::Vocab::from_words(words[2..].iter().cloned()).unwrap();
        let tokens: Vec<String> = sentence.iter().map(|&i| v.word(i).unwrap().to_string()).collect();
        let ev = Evaluator::from_model(&model, &v).unwrap();
        let rec = ev.sequence_surprisal("s", &tokens, None).unwrap();
        prop_assert!(rec.surprisals.iter().all(|&s| s >= 0.0));
        prop_assert!((rec.total() + rec.eos_surprisal + lp[0].iter().sum::<f64>()).abs() < 1e-9);
    }
}

fn toy_pair() -> StimulusPair {
    let s = |w: &str| w.split(' ').map(String::from).collect::<Vec<_>>();
    StimulusPair {
        id: "p".into(),
        template_id: "t".into(),
        language: Language::Synthetic,
        high_agree: s("the boy of the girls that was"),
        low_agree: s("the boys of the girl that was"),
        target_high: 6,
        target_low: 6,
        meta: None,
    }
}

#[test]
fn parse_back_rejects_broken_sentences() {
    let lex = Lexicon::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rc = rclab::synth::sample_rc(&mut rng, &lex, rclab::synth::Attachment::High).unwrap();
    assert_eq!(parse_back(&lex, &rc.tokens), Some(Construction::RcHigh));
    let mut both = rc.tokens.clone();
    // Make the lower nominal agree as well.
    let flip = |w: &str| {
        lex.nouns
            .iter()
            .find_map(|(s, p)| if w == s { Some(p.clone()) } else if w == p { Some(s.clone()) } else { None })
            .unwrap()
    };
    both[8] = flip(&both[8]);
    assert_eq!(parse_back(&lex, &both), None);
    let truncated: Sentence = Sentence {
        tokens: rc.tokens[..11].to_vec(),
        ..rc
    };
    assert_eq!(parse_back(&lex, &truncated.tokens), None);
}

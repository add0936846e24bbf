//! Generate a synthetic corpus and a matching set of test pairs.
//!
//!     cargo run --release --example synthetic_corpus -- [corpus_size] [rc_count] [high_proportion]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rclab::synth::{generate_corpus, generate_test_pairs, Construction, Lexicon, SynthConfig};

fn main() -> rclab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let corpus_size = args.first().map_or(10_000, |a| a.parse().expect("corpus size"));
    let rc_count = args.get(1).map_or(corpus_size / 10, |a| a.parse().expect("rc count"));
    let high = args.get(2).map_or(0.5, |a| a.parse().expect("proportion"));

    let lex = Lexicon::default();
    let corpus = generate_corpus(&SynthConfig::new(corpus_size, rc_count, high, 1), &lex)?;
    for c in [Construction::Filler, Construction::RcHigh, Construction::RcLow] {
        println!("{c:<8} {}", corpus.count(c));
    }
    println!();
    for s in corpus.sentences.iter().take(8) {
        println!("[{}] {}", s.construction, s.text());
    }

    let pairs = generate_test_pairs(&mut ChaCha8Rng::seed_from_u64(2020), &lex, 3)?;
    println!();
    for p in pairs {
        println!("high-agree: {}", p.high_agree.join(" "));
        println!("low-agree:  {}", p.low_agree.join(" "));
    }
    Ok(())
}

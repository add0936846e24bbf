//! Train on a corpus where every relative clause attaches low, then measure
//! the surprisal difference on ambiguous test pairs.
//!
//!     cargo run --release --example attachment_eval -- [corpus_size] [high_proportion]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rclab::corpus::{build_vocab, encode};
use rclab::eval::{Evaluator, Summary};
use rclab::lm::{train, LmConfig};
use rclab::synth::{generate_corpus, generate_test_pairs, Lexicon, SynthConfig};

fn main() -> rclab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let size: usize = args.first().map_or(10_000, |a| a.parse().expect("corpus size"));
    let high: f64 = args.get(1).map_or(0.0, |a| a.parse().expect("proportion"));

    let lex = Lexicon::default();
    let tr = generate_corpus(&SynthConfig::new(size, size / 10, high, 1), &lex)?.token_lists();
    let va = generate_corpus(&SynthConfig::new(size / 10, size / 100, high, 2), &lex)?.token_lists();
    let vocab = build_vocab(&tr, 50_000)?;
    let config = LmConfig {
        epochs: 2,
        ..LmConfig::desk_synthetic()
    };
    let checkpoint = train(&encode(&tr, &vocab), &encode(&va, &vocab), vocab.len(), &config)?;

    let pairs = generate_test_pairs(&mut ChaCha8Rng::seed_from_u64(2020), &lex, 100)?;
    let deltas = Evaluator::new(&checkpoint, &vocab)?.attachment_deltas(&pairs)?;
    for d in deltas.iter().take(5) {
        println!("{}  S(high-agree) {:.3}  S(low-agree) {:.3}  delta {:+.3}  {}", d.pair_id, d.surprisal_high_agree, d.surprisal_low_agree, d.delta, d.coding);
    }
    let s = Summary::of(&deltas);
    println!(
        "{} pairs: mean delta {:+.3}; LOW {:?}, HIGH {:?}",
        s.n,
        s.mean_delta,
        s.prop_low(),
        s.prop_high()
    );
    Ok(())
}

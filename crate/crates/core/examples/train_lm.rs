//! Train an LSTM language model on a synthetic corpus and save it.
//!
//!     cargo run --release --example train_lm -- [corpus_size] [epochs] [checkpoint]

use std::path::PathBuf;

use rclab::corpus::{build_vocab, encode};
use rclab::lm::{train_with, LmConfig};
use rclab::synth::{generate_corpus, Lexicon, SynthConfig};

fn main() -> rclab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let size: usize = args.first().map_or(5_000, |a| a.parse().expect("corpus size"));
    let epochs: usize = args.get(1).map_or(2, |a| a.parse().expect("epochs"));
    let out = args.get(2).map_or_else(|| std::env::temp_dir().join("rclab-example.almc"), PathBuf::from);

    let lex = Lexicon::default();
    let train = generate_corpus(&SynthConfig::new(size, size / 10, 0.5, 1), &lex)?.token_lists();
    let valid = generate_corpus(&SynthConfig::new(size / 10, size / 100, 0.5, 2), &lex)?.token_lists();
    let vocab = build_vocab(&train, 50_000)?;

    let config = LmConfig {
        epochs,
        ..LmConfig::desk_synthetic()
    };
    let checkpoint = train_with(&encode(&train, &vocab), &encode(&valid, &vocab), vocab.len(), &config, |r, _| {
        println!("epoch {}  lr {}  loss {:.3}  valid ppl {:.3}", r.epoch, r.lr, r.train_loss, r.valid_perplexity);
    })?;
    checkpoint.save(&out)?;
    println!("best epoch {} saved to {}", checkpoint.best_epoch, out.display());
    Ok(())
}

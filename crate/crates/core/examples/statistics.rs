//! One-sample t-test, JZS Bayes factor and Bonferroni decision on a set of
//! per-item surprisal differences.
//!
//!     cargo run --release --example statistics -- 0.8 1.1 0.2 -0.3 0.9

use rclab::stats::{bonferroni_threshold, jzs_bayes_factor, test_deltas, DEFAULT_PRIOR_SCALE};

fn main() -> rclab::Result<()> {
    let mut deltas: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    if deltas.is_empty() {
        deltas = vec![0.9, 1.4, 0.2, -0.3, 1.1, 0.7, 0.5, 1.8, -0.1, 0.6, 0.4, 1.2];
    }
    let r = test_deltas("example", &deltas, 6, DEFAULT_PRIOR_SCALE)?;
    println!("n {}  mean {:.4}  sd {:.4}", r.ttest.n, r.ttest.mean, r.ttest.sd);
    println!("t({}) = {:.4}, p = {:.3e}", r.ttest.df, r.ttest.t, r.ttest.p);
    println!("BF10 = {:.4} ({})", r.bf10, r.evidence().as_str());
    println!("Bonferroni threshold for 6 tests: {:.6} -> {}", bonferroni_threshold(6), r.decision);

    println!("\nBF10 against t for n = 24:");
    for t in [0.0, 1.0, 2.0, 3.0, 5.0] {
        println!("  t = {t}: {:.6}", jzs_bayes_factor(t, 24, DEFAULT_PRIOR_SCALE)?);
    }
    Ok(())
}

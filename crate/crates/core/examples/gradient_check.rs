//! Compare backpropagated gradients with central finite differences.
//!
//!     cargo run --release --example gradient_check -- [n_params]

use rclab::lm::gradcheck::gradient_check;
use rclab::lm::LmConfig;

fn main() -> rclab::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(240, |a| a.parse().expect("count"));
    let config = LmConfig {
        layers: 2,
        embed_units: 6,
        hidden_units: 5,
        dropout: 0.2,
        ..LmConfig::desk()
    };
    let sequences = vec![vec![1, 4, 7, 2, 9, 3, 1], vec![1, 5, 5, 8, 1, 0, 0], vec![1, 2, 3, 6, 9, 4, 1]];
    let report = gradient_check(&config, 10, &sequences, n, 7)?;
    for c in report.checks.iter().step_by((report.checks.len() / 10).max(1)) {
        println!(
            "{:<14} {:>5}  analytic {:+.6e}  numeric {:+.6e}  rel {:.2e}",
            c.tensor, c.index, c.analytic, c.numeric, c.rel_error
        );
    }
    println!("{} parameters checked, max relative error {:.3e}", report.checks.len(), report.max_rel_error());
    Ok(())
}

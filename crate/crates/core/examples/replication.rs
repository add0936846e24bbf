//! Train models on the procedural English sample corpus and evaluate them on
//! the 24-item set and the blocked-attachment set.
//!
//!     cargo run --release --example replication -- [out_dir]

use std::collections::BTreeMap;

use rclab::experiment::{emit_figures, run_replication, ExperimentConfig};

fn main() -> rclab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "replication".into());
    let mut m = BTreeMap::new();
    for (k, v) in [
        ("kind", "replication"),
        ("corpus", "sample-en"),
        ("stimuli", "default-en,blocked-en"),
        ("seeds", "1,2"),
        ("epochs", "1"),
    ] {
        m.insert(k.to_string(), v.to_string());
    }
    m.insert("out_dir".into(), out.clone());
    m.insert("cache_dir".into(), format!("{out}/cache"));
    let config = ExperimentConfig::from_map(&m)?;

    let report = run_replication(&config)?;
    for c in &report.cells {
        if let (Some(a), Some(s)) = (&c.aggregate, &c.stats) {
            println!(
                "{:<12} {} deltas  mean {:+.3}  t {:.2}  p {:.2e}  BF10 {:.3}",
                c.label,
                a.pooled.n,
                a.pooled.mean_delta,
                s.ttest.t,
                s.ttest.p,
                s.bf10
            );
        }
    }
    report.save(&config, &config.out_dir)?;
    emit_figures(&report, &config.out_dir)?;
    println!("report in {out}");
    Ok(())
}

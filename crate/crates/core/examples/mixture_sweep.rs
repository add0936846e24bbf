//! A small synthetic mixture sweep: vary the share of HIGH-attaching
//! relative clauses, train one model per cell and seed, and write the
//! report with its figures.
//!
//!     cargo run --release --example mixture_sweep -- [out_dir]

use std::collections::BTreeMap;

use rclab::experiment::{emit_figures, run_sweep, ExperimentConfig};

fn main() -> rclab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mixture-sweep".into());
    let mut m = BTreeMap::new();
    for (k, v) in [
        ("kind", "synthetic-mixture"),
        ("grid", "0,0.5,1"),
        ("seeds", "1,2"),
        ("corpus_size", "6000"),
        ("test_pairs", "100"),
        ("epochs", "2"),
    ] {
        m.insert(k.to_string(), v.to_string());
    }
    m.insert("out_dir".into(), out.clone());
    m.insert("cache_dir".into(), format!("{out}/cache"));
    let config = ExperimentConfig::from_map(&m)?;

    let report = run_sweep(&config)?;
    for c in &report.cells {
        let pooled = &c.aggregate.as_ref().expect("cell evaluated").pooled;
        println!(
            "{:<10} mean delta {:+.3}  LOW {:.2}  HIGH {:.2}  p {:.2e}",
            c.label,
            pooled.mean_delta,
            pooled.prop_low().unwrap_or(f64::NAN),
            pooled.prop_high().unwrap_or(f64::NAN),
            c.stats.as_ref().map_or(f64::NAN, |s| s.ttest.p)
        );
    }
    report.save(&config, &config.out_dir)?;
    for p in emit_figures(&report, &config.out_dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

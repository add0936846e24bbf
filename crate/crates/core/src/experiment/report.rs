//! Experiment reports: assembly, persistence and figures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, ExperimentKind, Profile};
use crate::error::{Error, Result};
use crate::eval::{aggregate_report, AggregateReport, DeltaRecord, Summary, RESULTS_HEADER};
use crate::stats::{save_stats, test_deltas, TestResult};

/// Where a report came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Provenance {
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// One-line comment placed at the top of every emitted text file.
    pub fn comment(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "# config_hash={} seeds={} version={}",
            self.config_hash,
            seeds.join(","),
            self.version
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Trained,
    /// Reused from the cache without retraining.
    Cached,
    Failed(String),
}

impl RunStatus {
    pub fn as_str(&self) -> &str {
        match self {
            RunStatus::Trained => "trained",
            RunStatus::Cached => "cached",
            RunStatus::Failed(_) => "failed",
        }
    }

    pub fn is_ok(&self) -> bool {
        !matches!(self, RunStatus::Failed(_))
    }
}

/// One trained (or loaded) model evaluated on one cell's stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub status: RunStatus,
    /// Validation perplexity of the kept parameters.
    pub perplexity: Option<f64>,
    pub deltas: Vec<DeltaRecord>,
    /// Training time in seconds; not persisted in reports.
    pub seconds: f64,
}

/// Results for one grid value or stimulus set.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub label: String,
    pub grid_value: Option<f64>,
    pub runs: Vec<RunOutcome>,
    pub aggregate: Option<AggregateReport>,
    pub stats: Option<TestResult>,
    /// Why statistics are missing, if they are.
    pub stats_error: Option<String>,
}

impl CellReport {
    /// Aggregate the runs and test the per-item mean deltas against zero.
    pub fn assemble(label: String, grid_value: Option<f64>, runs: Vec<RunOutcome>, bonferroni_m: usize, prior_scale: f64) -> Self {
        let deltas: Vec<DeltaRecord> = runs.iter().flat_map(|r| r.deltas.iter().cloned()).collect();
        let aggregate = aggregate_report(&deltas).ok();
        let (stats, stats_error) = match test_deltas(&label, &item_means(&deltas), bonferroni_m, prior_scale) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        CellReport {
            label,
            grid_value,
            runs,
            aggregate,
            stats,
            stats_error,
        }
    }

    pub fn deltas(&self) -> impl Iterator<Item = &DeltaRecord> {
        self.runs.iter().flat_map(|r| r.deltas.iter())
    }

    pub fn mean_delta(&self) -> Option<f64> {
        self.aggregate.as_ref().map(|a| a.pooled.mean_delta)
    }

    pub fn perplexities(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.perplexity).collect()
    }
}

/// Mean delta of every item across models, in first-seen item order.
pub fn item_means(deltas: &[DeltaRecord]) -> Vec<f64> {
    let mut order: Vec<&str> = Vec::new();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for d in deltas {
        let e = sums.entry(d.pair_id.as_str()).or_insert_with(|| {
            order.push(d.pair_id.as_str());
            (0.0, 0)
        });
        e.0 += d.delta;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|id| {
            let (s, n) = sums[id];
            s / n as f64
        })
        .collect()
}

/// Mean and sample standard deviation of validation perplexity across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityReport {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl PerplexityReport {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(PerplexityReport { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub profile: Profile,
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn failures(&self) -> Vec<(String, u64, String)> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.runs.iter().filter_map(move |r| match &r.status {
                    RunStatus::Failed(m) => Some((c.label.clone(), r.seed, m.clone())),
                    _ => None,
                })
            })
            .collect()
    }

    pub fn all_perplexities(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.perplexities()).collect()
    }

    /// Write `config.txt`, `deltas.csv`, `runs.csv` and `stats.csv` into `dir`.
    /// Whether a run was trained or taken from the cache is not recorded, so
    /// a rerun writes identical files.
    pub fn save(&self, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let head = self.provenance.comment();
        let mut written = Vec::new();

        let p = dir.join("config.txt");
        write_text(&p, &format!("{head}\n{}", config.to_kv()))?;
        written.push(p);

        let p = dir.join("deltas.csv");
        let mut buf = format!("{head}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let mut header = vec!["cell"];
            header.extend(RESULTS_HEADER);
            w.write_record(&header)?;
            for c in &self.cells {
                for d in c.deltas() {
                    w.write_record([
                        c.label.clone(),
                        d.pair_id.clone(),
                        d.template_id.clone(),
                        d.language.to_string(),
                        d.seed.map(|s| s.to_string()).unwrap_or_default(),
                        d.surprisal_high_agree.to_string(),
                        d.surprisal_low_agree.to_string(),
                        d.delta.to_string(),
                        d.coding.to_string(),
                    ])?;
                }
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
        }
        write_bytes(&p, &buf)?;
        written.push(p);

        let p = dir.join("runs.csv");
        let mut buf = format!("{head}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["cell", "grid_value", "seed", "status", "valid_perplexity", "error"])?;
            for c in &self.cells {
                for r in &c.runs {
                    w.write_record([
                        c.label.clone(),
                        c.grid_value.map(|g| g.to_string()).unwrap_or_default(),
                        r.seed.to_string(),
                        if r.status.is_ok() { "ok" } else { "failed" }.to_string(),
                        r.perplexity.map(|p| p.to_string()).unwrap_or_default(),
                        match &r.status {
                            RunStatus::Failed(m) => m.clone(),
                            _ => String::new(),
                        },
                    ])?;
                }
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
        }
        write_bytes(&p, &buf)?;
        written.push(p);

        let p = dir.join("stats.csv");
        let stats: Vec<TestResult> = self.cells.iter().filter_map(|c| c.stats.clone()).collect();
        save_stats(&stats, &p)?;
        prepend(&p, &head)?;
        written.push(p);
        Ok(written)
    }

    /// Rebuild a report from a directory written by [`ExperimentReport::save`].
    pub fn load(dir: &Path) -> Result<(Self, ExperimentConfig)> {
        let cfg_path = dir.join("config.txt");
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config = ExperimentConfig::from_map(&super::config::parse_kv(&text, &cfg_path)?)?;

        let runs_path = dir.join("runs.csv");
        let mut cells: Vec<(String, Option<f64>, Vec<RunOutcome>)> = Vec::new();
        for row in read_commented_csv(&runs_path)? {
            let (line, row) = row;
            let bad = |m: &str| Error::parse(&runs_path, line, m.to_string());
            let grid_value = if row[1].is_empty() {
                None
            } else {
                Some(row[1].parse().map_err(|_| bad("bad grid value"))?)
            };
            let status = match &row[3][..] {
                "ok" => RunStatus::Cached,
                "failed" => RunStatus::Failed(row[5].clone()),
                _ => return Err(bad("bad status")),
            };
            let run = RunOutcome {
                seed: row[2].parse().map_err(|_| bad("bad seed"))?,
                status,
                perplexity: if row[4].is_empty() {
                    None
                } else {
                    Some(row[4].parse().map_err(|_| bad("bad perplexity"))?)
                },
                deltas: vec![],
                seconds: 0.0,
            };
            match cells.iter_mut().find(|c| c.0 == row[0]) {
                Some(c) => c.2.push(run),
                None => cells.push((row[0].clone(), grid_value, vec![run])),
            }
        }

        let deltas_path = dir.join("deltas.csv");
        for (line, row) in read_commented_csv(&deltas_path)? {
            let bad = |m: &str| Error::parse(&deltas_path, line, m.to_string());
            let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad("bad number"));
            let seed: Option<u64> = if row[4].is_empty() {
                None
            } else {
                Some(row[4].parse().map_err(|_| bad("bad seed"))?)
            };
            let d = DeltaRecord {
                pair_id: row[1].clone(),
                template_id: row[2].clone(),
                language: row[3].parse()?,
                seed,
                surprisal_high_agree: num(5)?,
                surprisal_low_agree: num(6)?,
                delta: num(7)?,
                coding: row[8].parse()?,
            };
            let cell = cells
                .iter_mut()
                .find(|c| c.0 == row[0])
                .ok_or_else(|| bad("delta row for an unknown cell"))?;
            let run = cell
                .2
                .iter_mut()
                .find(|r| Some(r.seed) == seed)
                .ok_or_else(|| bad("delta row for an unknown run"))?;
            run.deltas.push(d);
        }

        let report = ExperimentReport {
            kind: config.kind,
            profile: config.profile,
            provenance: Provenance::of(&config),
            cells: cells
                .into_iter()
                .map(|(label, g, runs)| CellReport::assemble(label, g, runs, config.bonferroni_m, config.prior_scale))
                .collect(),
        };
        Ok((report, config))
    }
}

fn read_commented_csv(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn prepend(path: &Path, line: &str) -> Result<()> {
    let body = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = format!("{line}\n").into_bytes();
    out.extend(body);
    write_bytes(path, &out)
}

/// One row of the proportions table behind the bar chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionRow {
    pub cell: String,
    /// `None` for the pooled row.
    pub seed: Option<u64>,
    pub summary: Summary,
}

pub fn proportion_rows(report: &ExperimentReport) -> Vec<ProportionRow> {
    let mut rows = Vec::new();
    for c in &report.cells {
        if let Some(a) = &c.aggregate {
            rows.push(ProportionRow {
                cell: c.label.clone(),
                seed: None,
                summary: a.pooled.clone(),
            });
            for (seed, s) in &a.per_seed {
                rows.push(ProportionRow {
                    cell: c.label.clone(),
                    seed: *seed,
                    summary: s.clone(),
                });
            }
        }
    }
    rows
}

/// Write `proportions.svg` (pooled HIGH/LOW bars per cell with per-seed
/// markers), `proportions.csv` and `perplexity.txt` into `dir`.
pub fn emit_figures(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.cells.iter().all(|c| c.aggregate.is_none()) {
        return Err(Error::Input("report has no evaluated cells".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let head = report.provenance.comment();
    let rows = proportion_rows(report);

    let csv_path = dir.join("proportions.csv");
    let mut buf = format!("{head}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["cell", "seed", "n", "mean_delta", "n_low", "n_high", "n_tie", "prop_low", "prop_high"])?;
        let prop = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_default();
        for r in &rows {
            let s = &r.summary;
            w.write_record([
                r.cell.clone(),
                r.seed.map_or("pooled".to_string(), |s| s.to_string()),
                s.n.to_string(),
                s.mean_delta.to_string(),
                s.n_low.to_string(),
                s.n_high.to_string(),
                s.n_tie.to_string(),
                prop(s.prop_low()),
                prop(s.prop_high()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
    }
    write_bytes(&csv_path, &buf)?;

    let svg_path = dir.join("proportions.svg");
    write_text(&svg_path, &render_svg(report, &rows))?;

    let ppl_path = dir.join("perplexity.txt");
    write_text(&ppl_path, &perplexity_table(report))?;
    Ok(vec![svg_path, csv_path, ppl_path])
}

/// Table of validation perplexity per cell in `mean  sd` columns.
pub fn perplexity_table(report: &ExperimentReport) -> String {
    let mut s = format!("{}\n", report.provenance.comment());
    let _ = writeln!(s, "LM validation perplexity ({} profile)", report.profile);
    let width = report.cells.iter().map(|c| c.label.len()).max().unwrap_or(4).max(6);
    let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>5}", "Corpus", "mean", "sd", "runs");
    for c in &report.cells {
        match PerplexityReport::of(&c.perplexities()) {
            Some(p) => {
                let _ = writeln!(s, "{:<width$}  {:>8.2}  {:>8.2}  {:>5}", c.label, p.mean, p.sd, p.n);
            }
            None => {
                let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>5}", c.label, "-", "-", 0);
            }
        }
    }
    s
}

const BAR_W: f64 = 28.0;
const GROUP_GAP: f64 = 24.0;
const PLOT_H: f64 = 200.0;
const LEFT: f64 = 50.0;
const TOP: f64 = 40.0;

fn render_svg(report: &ExperimentReport, rows: &[ProportionRow]) -> String {
    let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.aggregate.is_some()).collect();
    let width = LEFT + cells.len() as f64 * (2.0 * BAR_W + GROUP_GAP) + 20.0;
    let height = TOP + PLOT_H + 60.0;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<!-- {} -->", report.provenance.comment().trim_start_matches("# "));
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="16">Proportion HIGH vs LOW attachment ({}, {} profile)</text>"#,
        report.kind, report.profile
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r##"<line x1="{}" x2="{}" y1="{y2}" y2="{y2}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{tick}</text>"##,
            LEFT,
            width - 10.0,
            LEFT - 4.0,
            y(tick) + 4.0,
            y2 = y(tick)
        );
    }
    for (i, c) in cells.iter().enumerate() {
        let x0 = LEFT + GROUP_GAP / 2.0 + i as f64 * (2.0 * BAR_W + GROUP_GAP);
        let pooled = &c.aggregate.as_ref().unwrap().pooled;
        for (k, (name, value, colour)) in [
            ("HIGH", pooled.prop_high(), "#4477aa"),
            ("LOW", pooled.prop_low(), "#ee6677"),
        ]
        .into_iter()
        .enumerate()
        {
            let v = value.unwrap_or(0.0);
            let x = x0 + k as f64 * BAR_W;
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-cell="{}" data-coding="{name}" data-value="{v}" x="{x}" y="{}" width="{}" height="{}" fill="{colour}"/>"#,
                xml_escape(&c.label),
                y(v),
                BAR_W - 2.0,
                PLOT_H * v
            );
            for r in rows.iter().filter(|r| r.cell == c.label && r.seed.is_some()) {
                let sv = if name == "HIGH" { r.summary.prop_high() } else { r.summary.prop_low() };
                if let Some(sv) = sv {
                    let _ = writeln!(
                        s,
                        r#"<circle class="seed" data-seed="{}" cx="{}" cy="{}" r="2.5" fill="black"/>"#,
                        r.seed.unwrap(),
                        x + (BAR_W - 2.0) / 2.0,
                        y(sv)
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + BAR_W,
            TOP + PLOT_H + 16.0,
            xml_escape(&c.label)
        );
    }
    let ly = TOP + PLOT_H + 36.0;
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{}" width="10" height="10" fill="#4477aa"/><text x="{}" y="{ly}">HIGH</text><rect x="{}" y="{}" width="10" height="10" fill="#ee6677"/><text x="{}" y="{ly}">LOW</text><circle cx="{}" cy="{}" r="2.5"/><text x="{}" y="{ly}">single seed</text>"##,
        ly - 9.0,
        LEFT + 14.0,
        LEFT + 60.0,
        ly - 9.0,
        LEFT + 74.0,
        LEFT + 125.0,
        ly - 4.0,
        LEFT + 131.0
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

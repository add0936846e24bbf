//! One-sample t-test, JZS Bayes factor and Bonferroni decisions.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Default Cauchy prior scale on the standardized effect size.
pub const DEFAULT_PRIOR_SCALE: f64 = std::f64::consts::SQRT_2 / 2.0;
/// Family-wise significance level before correction.
pub const ALPHA: f64 = 0.05;
/// Relative tolerance of the Bayes-factor quadrature.
pub const BF_REL_TOL: f64 = 1e-8;
const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub sd: f64,
    pub t: f64,
    pub df: usize,
    /// Two-tailed.
    pub p: f64,
}

/// Two-tailed p-value of a Student t statistic.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Test the mean of `deltas` against zero.
pub fn one_sample_t(deltas: &[f64]) -> Result<TTest> {
    let n = deltas.len();
    if n < 2 {
        return Err(Error::Input(format!("t-test needs at least 2 values, got {n}")));
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(Error::Input("t-test input contains non-finite values".into()));
    }
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::Input("degenerate sample: all values are equal".into()));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    Ok(TTest {
        n,
        mean,
        sd,
        t,
        df,
        p: student_t_two_tailed(t, df as f64),
    })
}

/// Result of the Bayes-factor quadrature with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesFactor {
    pub bf10: f64,
    /// Estimated absolute error of `bf10`.
    pub abs_error: f64,
    pub intervals: usize,
}

/// Integrand of the JZS numerator over the prior variance `g`, divided by
/// the null likelihood so the result is the Bayes factor directly.
fn jzs_integrand(g: f64, t: f64, n: f64, r: f64) -> f64 {
    if g <= 0.0 || !g.is_finite() {
        return 0.0;
    }
    let nu = n - 1.0;
    let a = 1.0 + n * g * r * r;
    let log_ratio = -(nu + 1.0) / 2.0 * ((t * t / (a * nu)).ln_1p() - (t * t / nu).ln_1p());
    let log_prior = -0.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * g.ln() - 1.0 / (2.0 * g);
    (log_ratio + log_prior - 0.5 * a.ln()).exp()
}

/// One-sample JZS Bayes factor BF10 for statistic `t` from `n` observations
/// with Cauchy prior scale `r`.
pub fn jzs_bayes_factor(t: f64, n: usize, r: f64) -> Result<f64> {
    jzs_bayes_factor_with(t, n, r, BF_REL_TOL).map(|b| b.bf10)
}

pub fn jzs_bayes_factor_with(t: f64, n: usize, r: f64, rel_tol: f64) -> Result<BayesFactor> {
    if n < 2 {
        return Err(Error::Input(format!("Bayes factor needs n >= 2, got {n}")));
    }
    if !t.is_finite() {
        return Err(Error::Input(format!("t statistic {t} is not finite")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Config(format!("prior scale must be positive, got {r}")));
    }
    let nf = n as f64;
    // g = u / (1 - u) maps (0, 1) onto (0, inf).
    let f = |u: f64| {
        let one_minus = 1.0 - u;
        let g = u / one_minus;
        jzs_integrand(g, t, nf, r) / (one_minus * one_minus)
    };
    let q = adaptive_gauss_kronrod(f, 0.0, 1.0, rel_tol, MAX_INTERVALS);
    if !q.converged || !(q.value > 0.0) || !q.value.is_finite() {
        return Err(Error::Numerical(format!(
            "Bayes-factor quadrature did not converge for t={t}, n={n}, r={r}: \
             estimate {} with error {} after {} subintervals",
            q.value, q.error, q.intervals
        )));
    }
    Ok(BayesFactor {
        bf10: q.value,
        abs_error: q.error,
        intervals: q.intervals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod rule with the embedded 7-point Gauss rule as error estimate.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive bisection: split the interval with the largest error
/// until the summed error estimate falls below `rel_tol * |value|`.
pub fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, max_intervals: usize) -> Quadrature {
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if error <= rel_tol * value.abs() || parts.len() >= max_intervals {
            return Quadrature {
                value,
                error,
                intervals: parts.len(),
                converged: error <= rel_tol * value.abs(),
            };
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Quadrature {
                value,
                error,
                intervals: parts.len() + 1,
                converged: false,
            };
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Significant,
    NotSignificant,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Significant => "significant",
            Decision::NotSignificant => "not-significant",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn bonferroni_threshold(m: usize) -> f64 {
    ALPHA / m as f64
}

/// Significant iff `p < 0.05 / m`.
pub fn bonferroni_decide(p: f64, m: usize) -> Result<Decision> {
    if m == 0 {
        return Err(Error::Input("Bonferroni correction needs m >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Input(format!("p-value {p} outside [0, 1]")));
    }
    Ok(if p < bonferroni_threshold(m) {
        Decision::Significant
    } else {
        Decision::NotSignificant
    })
}

/// Verbal grading of a Bayes factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    /// BF10 > 100
    HighlySignificant,
    /// BF10 > 10
    Significant,
    /// BF10 < 1/3
    SupportsNull,
    Inconclusive,
}

impl Evidence {
    pub fn of(bf10: f64) -> Evidence {
        if bf10 > 100.0 {
            Evidence::HighlySignificant
        } else if bf10 > 10.0 {
            Evidence::Significant
        } else if bf10 < 1.0 / 3.0 {
            Evidence::SupportsNull
        } else {
            Evidence::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Evidence::HighlySignificant => "BF>100",
            Evidence::Significant => "BF>10",
            Evidence::SupportsNull => "BF<1/3",
            Evidence::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub experiment_id: String,
    pub ttest: TTest,
    pub bf10: f64,
    pub bonferroni_m: usize,
    pub decision: Decision,
}

impl TestResult {
    pub fn evidence(&self) -> Evidence {
        Evidence::of(self.bf10)
    }
}

/// t-test, Bayes factor and corrected decision for one sample of deltas.
pub fn test_deltas(experiment_id: &str, deltas: &[f64], bonferroni_m: usize, prior_scale: f64) -> Result<TestResult> {
    let ttest = one_sample_t(deltas)?;
    let bf10 = jzs_bayes_factor(ttest.t, ttest.n, prior_scale)?;
    Ok(TestResult {
        experiment_id: experiment_id.to_string(),
        ttest,
        bf10,
        bonferroni_m,
        decision: bonferroni_decide(ttest.p, bonferroni_m)?,
    })
}

pub const STATS_HEADER: [&str; 10] = [
    "experiment_id",
    "n",
    "mean",
    "sd",
    "t",
    "df",
    "p",
    "bf10",
    "bonferroni_m",
    "decision",
];

pub fn write_stats<W: Write>(results: &[TestResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STATS_HEADER)?;
    for r in results {
        let t = &r.ttest;
        out.write_record([
            r.experiment_id.clone(),
            t.n.to_string(),
            t.mean.to_string(),
            t.sd.to_string(),
            t.t.to_string(),
            t.df.to_string(),
            t.p.to_string(),
            r.bf10.to_string(),
            r.bonferroni_m.to_string(),
            r.decision.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<stats>", e))?;
    Ok(())
}

pub fn save_stats(results: &[TestResult], path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_stats(results, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Values computed with arbitrary-precision quadrature (mpmath, 30 digits).
    const FROZEN: [(usize, [f64; 5]); 3] = [
        (10, [0.308793556708283, 0.464873011311353, 1.28231003197051, 4.49781442583044, 52.6102982268518]),
        (24, [0.214626339069821, 0.336141608053501, 1.16639155392249, 7.06673128806707, 537.475670158149]),
        (100, [0.110704637733069, 0.179666329309558, 0.746923436101481, 7.35397300911052, 5845.29835749996]),
    ];

    #[test]
    fn t_test_df2_closed_form() {
        let r = one_sample_t(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.t - 12f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        // F(t) = 1/2 + t / (2 sqrt(2 + t^2)) for two degrees of freedom
        let cdf = 0.5 + r.t / (2.0 * (2.0 + r.t * r.t).sqrt());
        assert!((r.p - 2.0 * (1.0 - cdf)).abs() < 1e-12);
        assert!((r.p - 0.0742).abs() < 1e-4);
    }

    #[test]
    fn t_test_df1_is_cauchy() {
        for t in [0.3, 1.0, 4.0] {
            let p = student_t_two_tailed(t, 1.0);
            let cauchy = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
            assert!((p - cauchy).abs() < 1e-12);
        }
    }

    #[test]
    fn t_test_degenerate_inputs() {
        assert!(matches!(one_sample_t(&[0.77; 5]), Err(Error::Input(_))));
        assert!(one_sample_t(&[1.0]).is_err());
        let r = one_sample_t(&[1.0, -1.0, 2.0, -2.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn bayes_factor_matches_frozen_values() {
        for (n, row) in FROZEN {
            for (t, want) in [0.0, 1.0, 2.0, 3.0, 5.0].into_iter().zip(row) {
                let got = jzs_bayes_factor(t, n, DEFAULT_PRIOR_SCALE).unwrap();
                assert!((got / want - 1.0).abs() < 1e-7, "t={t} n={n}: {got} vs {want}");
                let neg = jzs_bayes_factor(-t, n, DEFAULT_PRIOR_SCALE).unwrap();
                assert_eq!(got, neg);
            }
        }
    }

    #[test]
    fn bayes_factor_tolerance_halving_is_stable() {
        for t in [0.0, 2.0, 5.0] {
            let a = jzs_bayes_factor_with(t, 24, DEFAULT_PRIOR_SCALE, 1e-8).unwrap().bf10;
            let b = jzs_bayes_factor_with(t, 24, DEFAULT_PRIOR_SCALE, 5e-9).unwrap().bf10;
            assert!((a / b - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn bonferroni() {
        assert_eq!(bonferroni_decide(0.01, 6).unwrap(), Decision::NotSignificant);
        assert_eq!(bonferroni_decide(0.008, 6).unwrap(), Decision::Significant);
        assert_eq!(bonferroni_decide(0.04, 1).unwrap(), Decision::Significant);
        assert!((bonferroni_threshold(6) - 0.05 / 6.0).abs() < 1e-18);
        assert!(bonferroni_decide(0.5, 0).is_err());
    }

    #[test]
    fn evidence_grades() {
        assert_eq!(Evidence::of(537.0), Evidence::HighlySignificant);
        assert_eq!(Evidence::of(0.2), Evidence::SupportsNull);
        assert_eq!(Evidence::of(2.0), Evidence::Inconclusive);
    }
}

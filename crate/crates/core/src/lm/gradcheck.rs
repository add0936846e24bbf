//! Finite-difference verification of the analytic gradient.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::LmConfig;
use super::model::{Batch, DropoutMasks, Lstm};
use super::params::Params;
use crate::corpus::Vocab;
use crate::error::{Error, Result};

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Relative errors are measured against at least this magnitude.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checks: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare analytic and central-difference gradients in double precision on
/// `sequences` (packed as one sentence batch) for a stratified sample of
/// `n_params` parameters. Dropout, if configured, uses one fixed set of masks
/// for every evaluation.
pub fn gradient_check(
    config: &LmConfig,
    vocab_size: usize,
    sequences: &[Vec<u32>],
    n_params: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    config.validate()?;
    if n_params == 0 {
        return Err(Error::Input("empty parameter subset".into()));
    }
    if sequences.is_empty() {
        return Err(Error::Input("gradient check needs at least one sequence".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Params<f64> = Params::uniform(
        &mut rng,
        vocab_size,
        config.embed_units,
        config.hidden_units,
        config.layers,
        config.init_range,
    );
    let mut model = Lstm::new(params);
    let rows: Vec<&[u32]> = sequences.iter().map(Vec::as_slice).collect();
    let batch = Batch::from_sentences(&rows, Vocab::EOS_ID);
    let masks = (config.dropout > 0.0).then(|| {
        DropoutMasks::<f64>::sample(
            &mut rng,
            config.dropout,
            batch.steps * batch.batch,
            config.embed_units,
            config.hidden_units,
            config.layers,
        )
    });
    let state = model.zero_state(batch.batch);
    let (cache, _) = model.forward(&batch, &state, masks.clone())?;
    let (_, grad) = model.backward(&cache, &batch);

    let targets = sample_indices(&model.params, &batch, n_params, &mut rng);
    let names = model.params.tensor_names();
    let grads = grad.slices();
    let mut checks = Vec::with_capacity(targets.len());
    for (t, i) in targets {
        let orig = model.params.slices()[t][i];
        model.params.slices_mut()[t][i] = orig + STEP;
        let plus = model.loss(&batch, &state, masks.clone())?;
        model.params.slices_mut()[t][i] = orig - STEP;
        let minus = model.loss(&batch, &state, masks.clone())?;
        model.params.slices_mut()[t][i] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = grads[t][i];
        checks.push(ParamCheck {
            tensor: names[t].clone(),
            index: i,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport { checks })
}

/// An even share of the sample from every tensor. Embedding samples come from
/// rows of tokens that occur in the batch (other rows have zero gradient).
fn sample_indices<R: Rng>(params: &Params<f64>, batch: &Batch, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    let per = n.div_ceil(sizes.len());
    let used: Vec<u32> = batch.inputs.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let e = params.embed_units();
    let mut out = Vec::with_capacity(per * sizes.len());
    for (t, &size) in sizes.iter().enumerate() {
        let mut picked = BTreeSet::new();
        let cap = if t == 0 { used.len() * e } else { size };
        while picked.len() < per.min(cap) {
            let i = if t == 0 {
                *used.choose(rng).unwrap() as usize * e + rng.random_range(0..e)
            } else {
                rng.random_range(0..size)
            };
            picked.insert(i);
        }
        out.extend(picked.into_iter().map(|i| (t, i)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LmConfig {
        LmConfig {
            embed_units: 5,
            hidden_units: 4,
            layers: 2,
            dropout: 0.3,
            ..LmConfig::desk()
        }
    }

    #[test]
    fn analytic_gradient_matches() {
        let seqs = vec![vec![2, 3, 4, 5], vec![6, 2], vec![7, 8, 3]];
        let report = gradient_check(&cfg(), 10, &seqs, 90, 3).unwrap();
        assert!(report.checks.len() >= 90);
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }

    #[test]
    fn empty_subset_is_an_input_error() {
        assert!(matches!(
            gradient_check(&cfg(), 10, &[vec![2]], 0, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}

//! Batched log-probability scoring of whole sentences.

use ndarray::Axis;

use super::model::{log_softmax_at, Batch, Lstm};
use super::params::Float;
use crate::corpus::Vocab;
use crate::error::{Error, Result};

/// Sentences of equal length are scored together in batches of at most this many.
pub const SCORE_BATCH: usize = 256;

/// Natural-log probability of every position of every sentence, each scored
/// from a fresh state. Entry `i` of a row is `ln P(w_i | <eos> w_0 .. w_{i-1})`;
/// the final entry is the probability of the closing `<eos>`.
pub fn sentence_log_probs<F: Float>(model: &Lstm<F>, sentences: &[&[u32]]) -> Result<Vec<Vec<f64>>> {
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by_key(|&i| (sentences[i].len(), i));
    let mut out = vec![Vec::new(); sentences.len()];
    let mut start = 0;
    while start < order.len() {
        let len = sentences[order[start]].len();
        let mut end = start;
        while end < order.len() && end - start < SCORE_BATCH && sentences[order[end]].len() == len {
            end += 1;
        }
        let group: Vec<&[u32]> = order[start..end].iter().map(|&i| sentences[i]).collect();
        let batch = Batch::from_sentences(&group, Vocab::EOS_ID);
        let (cache, _) = model.forward(&batch, &model.zero_state(batch.batch), None)?;
        for (k, &idx) in order[start..end].iter().enumerate() {
            out[idx] = (0..batch.steps)
                .map(|t| {
                    let row = t * batch.batch + k;
                    let logits = cache.logits.index_axis(Axis(0), row);
                    log_softmax_at(logits.as_slice().unwrap(), batch.targets[row] as usize)
                })
                .collect();
        }
        start = end;
    }
    Ok(out)
}

/// `exp` of the mean negative log-likelihood per predicted token, counting
/// the end-of-sentence prediction of every sentence.
pub fn perplexity<F: Float>(model: &Lstm<F>, sentences: &[Vec<u32>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Input("perplexity of an empty corpus".into()));
    }
    let refs: Vec<&[u32]> = sentences.iter().map(Vec::as_slice).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for row in sentence_log_probs(model, &refs)? {
        total -= row.iter().sum::<f64>();
        count += row.len();
    }
    let ppl = (total / count as f64).exp();
    if !ppl.is_finite() {
        return Err(Error::Numerical(format!("non-finite perplexity (mean NLL {})", total / count as f64)));
    }
    Ok(ppl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::model::State;
    use crate::lm::params::Params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_scores_match_single_sentence_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model: Lstm<f32> = Lstm::new(Params::uniform(&mut rng, 9, 6, 5, 2, 0.3));
        let sents: Vec<Vec<u32>> = vec![vec![2, 3, 4], vec![5, 6, 7], vec![8], vec![2, 2, 3, 4, 5], vec![4, 3, 2]];
        let refs: Vec<&[u32]> = sents.iter().map(Vec::as_slice).collect();
        let all = sentence_log_probs(&model, &refs).unwrap();
        for (s, row) in sents.iter().zip(&all) {
            let single = sentence_log_probs(&model, &[s.as_slice()]).unwrap();
            assert_eq!(&single[0], row);
            assert_eq!(row.len(), s.len() + 1);
            // stepwise oracle
            let mut state: State<f32> = model.zero_state(1);
            let mut prev = Vocab::EOS_ID;
            for (i, &w) in s.iter().chain(std::iter::once(&Vocab::EOS_ID)).enumerate() {
                let p = model.step(prev, &mut state).unwrap();
                assert!((p[w as usize].ln() - row[i]).abs() < 1e-5);
                prev = w;
            }
        }
    }

    #[test]
    fn zero_model_has_vocab_sized_perplexity() {
        let model: Lstm<f32> = Lstm::new(Params::zeros(12, 3, 3, 1));
        let ppl = perplexity(&model, &[vec![2, 3], vec![4]]).unwrap();
        assert!((ppl - 12.0).abs() < 1e-9);
        assert!(perplexity(&model, &[]).is_err());
    }
}

//! Truncated-backprop SGD training with validation-driven annealing.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::{LmConfig, SequenceMode};
use super::model::{Batch, DropoutMasks, Lstm, State};
use super::params::Params;
use super::score::perplexity;
use crate::corpus::{EncodedCorpus, Vocab};
use crate::error::{Error, Result};

/// Sentences are length-sorted within pools of this many batches.
const SORT_POOL_BATCHES: usize = 64;

/// Summary of one training epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_perplexity: f64,
    pub seconds: f64,
}

/// Train a fresh model. Returns the parameters of the epoch with the lowest
/// validation perplexity.
pub fn train(train: &EncodedCorpus, valid: &EncodedCorpus, vocab_size: usize, config: &LmConfig) -> Result<Checkpoint> {
    train_with(train, valid, vocab_size, config, |_, _| {})
}

/// Like [`train`], calling `on_epoch` with the report and the current model
/// after every epoch.
pub fn train_with<C: FnMut(&EpochReport, &Lstm<f32>)>(
    train: &EncodedCorpus,
    valid: &EncodedCorpus,
    vocab_size: usize,
    config: &LmConfig,
    mut on_epoch: C,
) -> Result<Checkpoint> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Input("training and validation corpora must be non-empty".into()));
    }
    if train.vocab_hash != valid.vocab_hash {
        return Err(Error::Data("training and validation corpora use different vocabularies".into()));
    }
    if vocab_size < 2 {
        return Err(Error::Config("vocabulary must hold at least <unk> and <eos>".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params: Params<f32> = Params::uniform(
        &mut rng,
        vocab_size,
        config.embed_units,
        config.hidden_units,
        config.layers,
        config.init_range,
    );
    let mut model = Lstm::new(params);
    let mut lr = config.initial_lr;
    let mut best: Option<(f64, usize, Params<f32>)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let train_loss = match config.mode {
            SequenceMode::Sentence => sentence_epoch(&mut model, &train.sentences, config, lr, epoch, &mut rng)?,
            SequenceMode::Stream => stream_epoch(&mut model, &train.sentences, config, lr, epoch, &mut rng)?,
        };
        let ppl = perplexity(&model, &valid.sentences)?;
        history.push(ppl);
        let report = EpochReport {
            epoch,
            lr,
            train_loss,
            valid_perplexity: ppl,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: lr {lr:.4} train loss {train_loss:.4} valid ppl {ppl:.4} ({:.1}s)",
            report.seconds
        );
        on_epoch(&report, &model);
        match &best {
            Some((b, _, _)) if ppl >= *b => lr /= config.anneal,
            _ => best = Some((ppl, epoch, model.params.clone())),
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(Checkpoint {
        config: config.clone(),
        vocab_hash: train.vocab_hash,
        best_epoch,
        valid_history: history,
        model: Lstm::new(params),
    })
}

/// Forward, backward, clip and update on one batch. Returns the mean loss.
fn sgd_update<R: Rng>(
    model: &mut Lstm<f32>,
    batch: &Batch,
    state: &State<f32>,
    config: &LmConfig,
    lr: f64,
    rng: &mut R,
    where_: (usize, usize),
) -> Result<(f64, State<f32>)> {
    let masks = (config.dropout > 0.0).then(|| {
        DropoutMasks::sample(
            rng,
            config.dropout,
            batch.steps * batch.batch,
            config.embed_units,
            config.hidden_units,
            config.layers,
        )
    });
    let (cache, next) = model.forward(batch, state, masks)?;
    let (loss, mut grad) = model.backward(&cache, batch);
    let norm = grad.sq_norm().sqrt();
    if !loss.is_finite() || !norm.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss at epoch {}, batch {} (lr {lr})",
            where_.0, where_.1
        )));
    }
    if norm > config.grad_clip {
        grad.scale((config.grad_clip / norm) as f32);
    }
    model.params.sgd_step(&grad, lr as f32);
    Ok((loss, next))
}

/// Batches of whole sentences, length-sorted inside shuffled pools.
pub fn sentence_batches<R: Rng>(sentences: &[Vec<u32>], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..sentences.len()).collect();
    idx.shuffle(rng);
    for pool in idx.chunks_mut(batch_size * SORT_POOL_BATCHES) {
        pool.sort_by_key(|&i| sentences[i].len());
    }
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

fn sentence_epoch<R: Rng>(
    model: &mut Lstm<f32>,
    sentences: &[Vec<u32>],
    config: &LmConfig,
    lr: f64,
    epoch: usize,
    rng: &mut R,
) -> Result<f64> {
    let batches = sentence_batches(sentences, config.batch_size, rng);
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, members) in batches.iter().enumerate() {
        let rows: Vec<&[u32]> = members.iter().map(|&i| sentences[i].as_slice()).collect();
        let batch = Batch::from_sentences(&rows, Vocab::EOS_ID);
        let state = model.zero_state(batch.batch);
        let (loss, _) = sgd_update(model, &batch, &state, config, lr, rng, (epoch, k + 1))?;
        let n = batch.num_targets();
        total += loss * n as f64;
        count += n;
    }
    Ok(total / count.max(1) as f64)
}

/// Concatenate sentences (each followed by `<eos>`, the stream opening with
/// one) and lay the stream out as `columns` contiguous strips.
pub fn stream_columns(sentences: &[Vec<u32>], columns: usize) -> (Vec<u32>, usize) {
    let mut stream = Vec::with_capacity(sentences.iter().map(|s| s.len() + 1).sum::<usize>() + 1);
    stream.push(Vocab::EOS_ID);
    for s in sentences {
        stream.extend_from_slice(s);
        stream.push(Vocab::EOS_ID);
    }
    let columns = columns.min(stream.len().saturating_sub(1)).max(1);
    let len = (stream.len() - 1) / columns;
    (stream, len)
}

fn stream_epoch<R: Rng>(
    model: &mut Lstm<f32>,
    sentences: &[Vec<u32>],
    config: &LmConfig,
    lr: f64,
    epoch: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut order: Vec<&Vec<u32>> = sentences.iter().collect();
    order.shuffle(rng);
    let shuffled: Vec<Vec<u32>> = order.into_iter().cloned().collect();
    let (stream, len) = stream_columns(&shuffled, config.batch_size);
    let cols = config.batch_size.min(stream.len() - 1).max(1);
    let mut state = model.zero_state(cols);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut start = 0;
    let mut k = 0;
    while start < len {
        let steps = config.bptt_len.min(len - start);
        let mut inputs = Vec::with_capacity(steps * cols);
        let mut targets = Vec::with_capacity(steps * cols);
        for t in 0..steps {
            for c in 0..cols {
                let pos = c * len + start + t;
                inputs.push(stream[pos]);
                targets.push(stream[pos + 1]);
            }
        }
        let batch = Batch {
            steps,
            batch: cols,
            inputs,
            targets,
            mask: vec![true; steps * cols],
        };
        k += 1;
        let (loss, next) = sgd_update(model, &batch, &state, config, lr, rng, (epoch, k))?;
        state = next;
        total += loss * (steps * cols) as f64;
        count += steps * cols;
        start += steps;
    }
    Ok(total / count.max(1) as f64)
}

//! Adam training loop over masked training examples.
//!
//! Two named profiles exist upstream: a small-learning-rate single-epoch one
//! for fine-tuning an already-trained model, and a higher-rate multi-epoch
//! one for training from random init.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingExample;
use crate::error::{Error, Result};

use super::forward::{backward, forward_cached};
use super::loss::{nll_dlogits, nll_sum_from_logits};
use super::params::{LmConfig, LmParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global-norm clip; `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl TrainHyper {
    /// Batch 32, lr 5e-5, one epoch: the fine-tuning recipe for a model that
    /// already carries useful weights.
    pub fn paper_faithful(seed: u64) -> TrainHyper {
        TrainHyper {
            batch_size: 32,
            learning_rate: 5e-5,
            epochs: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_clip_norm: Some(1.0),
            seed,
        }
    }

    /// Higher rate, many epochs: what a randomly initialized tiny model
    /// actually needs to fit a small corpus.
    pub fn desk(seed: u64) -> TrainHyper {
        TrainHyper { learning_rate: 3e-4, epochs: 30, batch_size: 8, ..TrainHyper::paper_faithful(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidConfig("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam moments shaped like the parameters they update.
pub struct AdamState {
    m: LmParams,
    v: LmParams,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(config: &LmConfig, beta1: f64, beta2: f64, epsilon: f64) -> AdamState {
        AdamState { m: LmParams::zeros(config), v: LmParams::zeros(config), step: 0, beta1, beta2, epsilon }
    }

    pub fn from_hyper(config: &LmConfig, hyper: &TrainHyper) -> AdamState {
        AdamState::new(config, hyper.adam_beta1, hyper.adam_beta2, hyper.adam_epsilon)
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut LmParams, grads: &LmParams, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut p = params.tensors_mut();
        let mut m = self.m.tensors_mut();
        let mut v = self.v.tensors_mut();
        let g = grads.named_tensors();
        for i in 0..p.len() {
            let (pi, mi, vi, gi) = (&mut p[i], &mut m[i], &mut v[i], g[i].2);
            for j in 0..pi.len() {
                mi[j] = self.beta1 * mi[j] + (1.0 - self.beta1) * gi[j];
                vi[j] = self.beta2 * vi[j] + (1.0 - self.beta2) * gi[j] * gi[j];
                let mhat = mi[j] / bc1;
                let vhat = vi[j] / bc2;
                pi[j] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Scale gradients down to the clip norm when they exceed it.
pub fn clip_global_norm(grads: &mut LmParams, clip: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip && norm > 0.0 {
        grads.scale(clip / norm);
    }
    norm
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean NLL per loss token, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

fn example_seed(base: u64, epoch: usize, index: usize) -> u64 {
    // splitmix-style mixing so parallel per-example dropout stays seeded.
    let mut z = base ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ (index as u64).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Train a copy of `params` on the dataset. Deterministic for fixed seeds:
/// per-example work runs in parallel but is reduced in batch order.
pub fn train(
    params: &LmParams,
    config: &LmConfig,
    dataset: &[TrainingExample],
    hyper: &TrainHyper,
) -> Result<(LmParams, TrainReport)> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus("training dataset".into()));
    }
    for (i, ex) in dataset.iter().enumerate() {
        ex.validate().map_err(|e| Error::InvalidConfig(format!("example {i}: {e}")))?;
    }

    let mut params = params.clone();
    let mut adam = AdamState::from_hyper(config, hyper);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_count = 0usize;

        for (batch_idx, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let results: Vec<Result<(f64, usize, LmParams)>> = chunk
                .par_iter()
                .map(|&i| {
                    let ex = &dataset[i];
                    let mut drop_rng;
                    let dropout = if config.dropout > 0.0 {
                        drop_rng = ChaCha8Rng::seed_from_u64(example_seed(hyper.seed, epoch, i));
                        Some((config.dropout, &mut drop_rng))
                    } else {
                        None
                    };
                    let cache = forward_cached(&params, config, &ex.input_ids, dropout)?;
                    let (sum, count) = nll_sum_from_logits(&cache.logits, ex)?;
                    let dlogits = nll_dlogits(&cache.logits, ex)?;
                    let grads = backward(&params, config, &cache, &dlogits)?;
                    Ok((sum, count, grads))
                })
                .collect();

            let mut grads = LmParams::zeros(config);
            let mut batch_sum = 0.0;
            let mut batch_count = 0usize;
            for r in results {
                let (sum, count, g) = r?;
                batch_sum += sum;
                batch_count += count;
                grads.add_scaled(&g, 1.0);
            }
            let batch_loss = batch_sum / batch_count as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {batch_loss} at epoch {epoch}, batch {batch_idx} (examples {chunk:?})"
                )));
            }
            grads.scale(1.0 / batch_count as f64);
            if let Some(clip) = hyper.grad_clip_norm {
                clip_global_norm(&mut grads, clip);
            }
            adam.step(&mut params, &grads, hyper.learning_rate);
            if !params.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite parameters after epoch {epoch}, batch {batch_idx}"
                )));
            }

            epoch_sum += batch_sum;
            epoch_count += batch_count;
        }
        let mean = epoch_sum / epoch_count as f64;
        tracing::debug!(epoch, mean_nll = mean, "train epoch");
        epoch_losses.push(mean);
    }

    Ok((params, TrainReport { epoch_losses }))
}

/// Mean NLL per loss token over a dataset, for before/after comparisons.
pub fn mean_dataset_loss(
    params: &LmParams,
    config: &LmConfig,
    dataset: &[TrainingExample],
) -> Result<f64> {
    let sums: Vec<Result<(f64, usize)>> = dataset
        .par_iter()
        .map(|ex| {
            let cache = forward_cached(params, config, &ex.input_ids, None)?;
            nll_sum_from_logits(&cache.logits, ex)
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for s in sums {
        let (sum, c) = s?;
        total += sum;
        count += c;
    }
    if count == 0 {
        return Err(Error::EmptyCorpus("loss dataset".into()));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::encode_from_ids;
    use crate::lm::params::init_params;

    fn micro() -> (LmConfig, LmParams, Vec<TrainingExample>) {
        let cfg = LmConfig {
            vocab_size: 12,
            context_length: 16,
            embedding_dim: 8,
            num_layers: 1,
            num_heads: 2,
            feed_forward_dim: 12,
            dropout: 0.0,
            seed: 5,
        };
        let p = init_params(&cfg).unwrap();
        let data = vec![
            encode_from_ids(&[7], &[8, 9], 16).unwrap(),
            encode_from_ids(&[7, 10], &[9, 8], 16).unwrap(),
            encode_from_ids(&[10], &[11, 8, 9], 16).unwrap(),
        ];
        (cfg, p, data)
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let (cfg, p, data) = micro();
        let hyper = TrainHyper { learning_rate: 0.0, epochs: 1, ..TrainHyper::desk(1) };
        let (after, _) = train(&p, &cfg, &data, &hyper).unwrap();
        assert_eq!(p, after);
    }

    #[test]
    fn same_data_and_seed_give_identical_params() {
        let (cfg, p, data) = micro();
        let hyper = TrainHyper { epochs: 3, ..TrainHyper::desk(9) };
        let (a, _) = train(&p, &cfg, &data, &hyper).unwrap();
        let (b, _) = train(&p, &cfg, &data, &hyper).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_after_training_is_below_loss_before() {
        let (cfg, p, data) = micro();
        let hyper = TrainHyper { epochs: 10, ..TrainHyper::desk(2) };
        let before = mean_dataset_loss(&p, &cfg, &data).unwrap();
        let (after_params, report) = train(&p, &cfg, &data, &hyper).unwrap();
        let after = mean_dataset_loss(&after_params, &cfg, &data).unwrap();
        assert!(after < before, "before {before}, after {after}");
        assert_eq!(report.epoch_losses.len(), 10);
    }

    #[test]
    fn dropout_training_is_still_deterministic() {
        let (cfg, p, data) = micro();
        let cfg = LmConfig { dropout: 0.1, ..cfg };
        let hyper = TrainHyper { epochs: 2, ..TrainHyper::desk(4) };
        let (a, _) = train(&p, &cfg, &data, &hyper).unwrap();
        let (b, _) = train(&p, &cfg, &data, &hyper).unwrap();
        assert_eq!(a, b);
    }
}

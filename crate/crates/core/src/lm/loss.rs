//! Masked-condition negative log-likelihood and sequence log-probabilities.
//!
//! The target at position `i` is predicted from the logits at position
//! `i - 1`, so the condition span steers generation without ever
//! contributing loss terms of its own.

use ndarray::Array2;

use crate::corpus::TrainingExample;
use crate::error::{Error, Result};

use super::forward::{forward_cached, log_softmax_row};
use super::params::{LmConfig, LmParams};

/// Sum of `-log p(target_i | input_{<i})` over loss positions plus the
/// number of such positions. Callers divide by whichever count they batch
/// over.
pub fn nll_sum_from_logits(logits: &Array2<f64>, example: &TrainingExample) -> Result<(f64, usize)> {
    example.validate()?;
    if logits.nrows() != example.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits rows {} vs example length {}",
            logits.nrows(),
            example.len()
        )));
    }
    if example.loss_mask[0] {
        return Err(Error::ShapeMismatch("position 0 cannot be a loss position".into()));
    }
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..example.len() {
        if !example.loss_mask[i] {
            continue;
        }
        let row: Vec<f64> = logits.row(i - 1).to_vec();
        let lp = log_softmax_row(&row);
        sum -= lp[example.target_ids[i] as usize];
        count += 1;
    }
    Ok((sum, count))
}

/// Mean NLL over the example's loss positions.
pub fn nll_from_logits(logits: &Array2<f64>, example: &TrainingExample) -> Result<f64> {
    let (sum, count) = nll_sum_from_logits(logits, example)?;
    Ok(sum / count as f64)
}

/// Gradient of the *summed* NLL w.r.t. the logits. Rows that predict no
/// loss position stay exactly zero.
pub fn nll_dlogits(logits: &Array2<f64>, example: &TrainingExample) -> Result<Array2<f64>> {
    example.validate()?;
    let mut d = Array2::zeros(logits.dim());
    for i in 0..example.len() {
        if !example.loss_mask[i] {
            continue;
        }
        let row: Vec<f64> = logits.row(i - 1).to_vec();
        let lp = log_softmax_row(&row);
        let mut drow = d.row_mut(i - 1);
        for (j, &l) in lp.iter().enumerate() {
            drow[j] += l.exp();
        }
        drow[example.target_ids[i] as usize] -= 1.0;
    }
    Ok(d)
}

/// Mean NLL of one example under the model.
pub fn nll_loss(params: &LmParams, config: &LmConfig, example: &TrainingExample) -> Result<f64> {
    let cache = forward_cached(params, config, &example.input_ids, None)?;
    nll_from_logits(&cache.logits, example)
}

/// Log-probability of an encoded example's unmasked span: the sum of
/// per-token log-softmax terms. Always `<= 0`.
pub fn sequence_log_prob_example(
    params: &LmParams,
    config: &LmConfig,
    example: &TrainingExample,
) -> Result<f64> {
    let (sum, _) = {
        let cache = forward_cached(params, config, &example.input_ids, None)?;
        nll_sum_from_logits(&cache.logits, example)?
    };
    Ok(-sum)
}

//! Incremental decoding with cached keys and values.
//!
//! A session processes one token at a time and keeps per-layer key/value
//! rows, so each step costs one token's worth of compute instead of the
//! whole prefix. Sessions clone cheaply enough for beam branching and for
//! reusing a shared condition prefix across samples.

use ndarray::{s, Array1, Array2};

use crate::corpus::TokenId;
use crate::error::{Error, Result};

use super::forward::log_softmax_row;
use super::params::{LmConfig, LmParams, NormParams};

fn norm_row(x: &Array1<f64>, p: &NormParams) -> Array1<f64> {
    let d = x.len();
    let mean = x.sum() / d as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
    let rstd = 1.0 / (var + super::forward::LN_EPS).sqrt();
    Array1::from_shape_fn(d, |j| p.gain[j] * (x[j] - mean) * rstd + p.offset[j])
}

/// Decode state: cached keys/values per layer plus the next-token
/// distribution after the last processed token.
#[derive(Debug, Clone)]
pub struct DecodeState {
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
    pos: usize,
    log_probs: Vec<f64>,
}

impl DecodeState {
    pub fn new(config: &LmConfig) -> DecodeState {
        let d = config.embedding_dim;
        DecodeState {
            keys: vec![Array2::zeros((0, d)); config.num_layers],
            values: vec![Array2::zeros((0, d)); config.num_layers],
            pos: 0,
            log_probs: Vec::new(),
        }
    }

    /// Number of tokens processed so far.
    pub fn len(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == 0
    }

    /// Positions left before the context window fills.
    pub fn remaining(&self, config: &LmConfig) -> usize {
        config.context_length.saturating_sub(self.pos)
    }

    /// Natural-log next-token distribution after the last processed token.
    /// Empty before the first `advance`.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Process one token and refresh the next-token distribution.
    pub fn advance(&mut self, params: &LmParams, config: &LmConfig, id: TokenId) -> Result<()> {
        if (id as usize) >= config.vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab: config.vocab_size });
        }
        if self.pos >= config.context_length {
            return Err(Error::SequenceTooLong {
                len: self.pos + 1,
                context: config.context_length,
            });
        }
        let d = config.embedding_dim;
        let heads = config.num_heads;
        let hd = config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x = &params.tok_emb.row(id as usize) + &params.pos_emb.row(self.pos);
        for (li, l) in params.layers.iter().enumerate() {
            let y1 = norm_row(&x, &l.norm1);
            let q = y1.dot(&l.wq) + &l.bq;
            let k = y1.dot(&l.wk) + &l.bk;
            let v = y1.dot(&l.wv) + &l.bv;
            self.keys[li].push_row(k.view()).expect("key shape");
            self.values[li].push_row(v.view()).expect("value shape");

            let t = self.keys[li].nrows();
            let mut ctx = Array1::zeros(d);
            for h in 0..heads {
                let cols = h * hd..(h + 1) * hd;
                let qh = q.slice(s![cols.clone()]);
                let kh = self.keys[li].slice(s![.., cols.clone()]);
                let vh = self.values[li].slice(s![.., cols.clone()]);
                let mut scores: Vec<f64> = (0..t).map(|j| qh.dot(&kh.row(j)) * scale).collect();
                let maxv = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for sc in scores.iter_mut() {
                    *sc = (*sc - maxv).exp();
                    sum += *sc;
                }
                let mut ctx_slice = ctx.slice_mut(s![cols]);
                for j in 0..t {
                    let w = scores[j] / sum;
                    ctx_slice.scaled_add(w, &vh.row(j));
                }
            }
            let attn_out = ctx.dot(&l.wo) + &l.bo;
            x += &attn_out;

            let y2 = norm_row(&x, &l.norm2);
            let h1 = y2.dot(&l.ff_w1) + &l.ff_b1;
            let act = h1.mapv(|z| {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * z * (1.0 + (c * (z + 0.044715 * z * z * z)).tanh())
            });
            let ff_out = act.dot(&l.ff_w2) + &l.ff_b2;
            x += &ff_out;
        }

        let hidden = norm_row(&x, &params.final_norm);
        let logits = hidden.dot(&params.out_w) + &params.out_b;
        self.log_probs = log_softmax_row(logits.as_slice().expect("standard layout"));
        self.pos += 1;
        Ok(())
    }

    /// Feed a whole prefix.
    pub fn advance_all(&mut self, params: &LmParams, config: &LmConfig, ids: &[TokenId]) -> Result<()> {
        for &id in ids {
            self.advance(params, config, id)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::forward::forward;
    use crate::lm::params::init_params;
    use crate::lm::LmConfig;

    #[test]
    fn incremental_decode_matches_full_forward() {
        let cfg = LmConfig {
            vocab_size: 13,
            context_length: 10,
            embedding_dim: 8,
            num_layers: 2,
            num_heads: 2,
            feed_forward_dim: 12,
            dropout: 0.0,
            seed: 11,
        };
        let p = init_params(&cfg).unwrap();
        let ids = [1u32, 7, 3, 12, 5, 9];

        let full = forward(&p, &cfg, &ids).unwrap();
        let mut state = DecodeState::new(&cfg);
        for (i, &id) in ids.iter().enumerate() {
            state.advance(&p, &cfg, id).unwrap();
            let row: Vec<f64> = full.row(i).to_vec();
            let expect = log_softmax_row(&row);
            for (a, b) in state.log_probs().iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-9, "step {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn advancing_past_the_context_window_errors() {
        let cfg = LmConfig {
            vocab_size: 8,
            context_length: 3,
            embedding_dim: 8,
            num_layers: 1,
            num_heads: 2,
            feed_forward_dim: 8,
            dropout: 0.0,
            seed: 0,
        };
        let p = init_params(&cfg).unwrap();
        let mut state = DecodeState::new(&cfg);
        for id in [1, 2, 3] {
            state.advance(&p, &cfg, id).unwrap();
        }
        assert!(state.advance(&p, &cfg, 4).is_err());
        assert_eq!(state.remaining(&cfg), 0);
    }
}

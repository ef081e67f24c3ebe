//! Model configuration and parameter containers.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the tiny autoregressive transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    pub embedding_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feed_forward_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.context_length == 0
            || self.embedding_dim == 0
            || self.num_layers == 0
            || self.num_heads == 0
            || self.feed_forward_dim == 0
        {
            return Err(Error::InvalidConfig("all model dimensions must be >= 1".into()));
        }
        if self.embedding_dim % self.num_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding_dim {} not divisible by num_heads {}",
                self.embedding_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embedding_dim / self.num_heads
    }
}

/// Layer-norm gain and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gain: Array1<f64>,
    pub offset: Array1<f64>,
}

impl NormParams {
    fn identity(dim: usize) -> NormParams {
        NormParams { gain: Array1::ones(dim), offset: Array1::zeros(dim) }
    }

    fn zeros(dim: usize) -> NormParams {
        NormParams { gain: Array1::zeros(dim), offset: Array1::zeros(dim) }
    }
}

/// One transformer block: pre-norm attention then pre-norm feed-forward,
/// each with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub norm1: NormParams,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub norm2: NormParams,
    pub ff_w1: Array2<f64>,
    pub ff_b1: Array1<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array1<f64>,
}

/// All weights of the model. Values are `f64` in memory; checkpoints store
/// them as little-endian `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_norm: NormParams,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

/// Weights drawn from N(0, 0.02^2); biases and norm offsets start at zero,
/// norm gains at one. Deterministic for a given config seed.
pub fn init_params(config: &LmConfig) -> Result<LmParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 0.02).expect("valid std");
    let mut draw2 = |rows: usize, cols: usize| {
        Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
    };

    let d = config.embedding_dim;
    let f = config.feed_forward_dim;
    let v = config.vocab_size;

    let tok_emb = draw2(v, d);
    let pos_emb = draw2(config.context_length, d);
    let mut layers = Vec::with_capacity(config.num_layers);
    for _ in 0..config.num_layers {
        layers.push(LayerParams {
            norm1: NormParams::identity(d),
            wq: draw2(d, d),
            bq: Array1::zeros(d),
            wk: draw2(d, d),
            bk: Array1::zeros(d),
            wv: draw2(d, d),
            bv: Array1::zeros(d),
            wo: draw2(d, d),
            bo: Array1::zeros(d),
            norm2: NormParams::identity(d),
            ff_w1: draw2(d, f),
            ff_b1: Array1::zeros(f),
            ff_w2: draw2(f, d),
            ff_b2: Array1::zeros(d),
        });
    }
    let final_norm = NormParams::identity(d);
    let out_w = draw2(d, v);
    let out_b = Array1::zeros(v);

    Ok(LmParams { tok_emb, pos_emb, layers, final_norm, out_w, out_b })
}

impl LmParams {
    /// All-zero parameters with the same shapes; the accumulator for
    /// gradients and optimizer moments.
    pub fn zeros(config: &LmConfig) -> LmParams {
        let d = config.embedding_dim;
        let f = config.feed_forward_dim;
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                norm1: NormParams::zeros(d),
                wq: Array2::zeros((d, d)),
                bq: Array1::zeros(d),
                wk: Array2::zeros((d, d)),
                bk: Array1::zeros(d),
                wv: Array2::zeros((d, d)),
                bv: Array1::zeros(d),
                wo: Array2::zeros((d, d)),
                bo: Array1::zeros(d),
                norm2: NormParams::zeros(d),
                ff_w1: Array2::zeros((d, f)),
                ff_b1: Array1::zeros(f),
                ff_w2: Array2::zeros((f, d)),
                ff_b2: Array1::zeros(d),
            })
            .collect();
        LmParams {
            tok_emb: Array2::zeros((config.vocab_size, d)),
            pos_emb: Array2::zeros((config.context_length, d)),
            layers,
            final_norm: NormParams::zeros(d),
            out_w: Array2::zeros((d, config.vocab_size)),
            out_b: Array1::zeros(config.vocab_size),
        }
    }

    /// Config implied by the stored shapes. Dropout and seed are not
    /// recoverable from weights and come back as zero.
    pub fn implied_dims(&self) -> (usize, usize, usize, usize, usize) {
        (
            self.tok_emb.nrows(),
            self.pos_emb.nrows(),
            self.tok_emb.ncols(),
            self.layers.len(),
            self.layers.first().map(|l| l.ff_w1.ncols()).unwrap_or(0),
        )
    }

    /// Named tensors in canonical order. The order is the contract for
    /// checkpoints and for flat parameter indexing.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let push2 = |out: &mut Vec<(String, Vec<usize>, &[f64])>, name: String, a: &Array2<f64>| {
            out.push((name, vec![a.nrows(), a.ncols()], a.as_slice().expect("standard layout")));
        };
        let push1 = |out: &mut Vec<(String, Vec<usize>, &[f64])>, name: String, a: &Array1<f64>| {
            out.push((name, vec![a.len()], a.as_slice().expect("standard layout")));
        };
        push2(&mut out, "tok_emb".into(), &self.tok_emb);
        push2(&mut out, "pos_emb".into(), &self.pos_emb);
        for (i, l) in self.layers.iter().enumerate() {
            push1(&mut out, format!("layers.{i}.norm1.gain"), &l.norm1.gain);
            push1(&mut out, format!("layers.{i}.norm1.offset"), &l.norm1.offset);
            push2(&mut out, format!("layers.{i}.wq"), &l.wq);
            push1(&mut out, format!("layers.{i}.bq"), &l.bq);
            push2(&mut out, format!("layers.{i}.wk"), &l.wk);
            push1(&mut out, format!("layers.{i}.bk"), &l.bk);
            push2(&mut out, format!("layers.{i}.wv"), &l.wv);
            push1(&mut out, format!("layers.{i}.bv"), &l.bv);
            push2(&mut out, format!("layers.{i}.wo"), &l.wo);
            push1(&mut out, format!("layers.{i}.bo"), &l.bo);
            push1(&mut out, format!("layers.{i}.norm2.gain"), &l.norm2.gain);
            push1(&mut out, format!("layers.{i}.norm2.offset"), &l.norm2.offset);
            push2(&mut out, format!("layers.{i}.ff_w1"), &l.ff_w1);
            push1(&mut out, format!("layers.{i}.ff_b1"), &l.ff_b1);
            push2(&mut out, format!("layers.{i}.ff_w2"), &l.ff_w2);
            push1(&mut out, format!("layers.{i}.ff_b2"), &l.ff_b2);
        }
        push1(&mut out, "final_norm.gain".into(), &self.final_norm.gain);
        push1(&mut out, "final_norm.offset".into(), &self.final_norm.offset);
        push2(&mut out, "out_w".into(), &self.out_w);
        push1(&mut out, "out_b".into(), &self.out_b);
        out
    }

    /// Mutable flat views in the same canonical order as [`named_tensors`].
    ///
    /// [`named_tensors`]: LmParams::named_tensors
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(self.tok_emb.as_slice_mut().expect("standard layout"));
        out.push(self.pos_emb.as_slice_mut().expect("standard layout"));
        for l in &mut self.layers {
            out.push(l.norm1.gain.as_slice_mut().expect("standard layout"));
            out.push(l.norm1.offset.as_slice_mut().expect("standard layout"));
            out.push(l.wq.as_slice_mut().expect("standard layout"));
            out.push(l.bq.as_slice_mut().expect("standard layout"));
            out.push(l.wk.as_slice_mut().expect("standard layout"));
            out.push(l.bk.as_slice_mut().expect("standard layout"));
            out.push(l.wv.as_slice_mut().expect("standard layout"));
            out.push(l.bv.as_slice_mut().expect("standard layout"));
            out.push(l.wo.as_slice_mut().expect("standard layout"));
            out.push(l.bo.as_slice_mut().expect("standard layout"));
            out.push(l.norm2.gain.as_slice_mut().expect("standard layout"));
            out.push(l.norm2.offset.as_slice_mut().expect("standard layout"));
            out.push(l.ff_w1.as_slice_mut().expect("standard layout"));
            out.push(l.ff_b1.as_slice_mut().expect("standard layout"));
            out.push(l.ff_w2.as_slice_mut().expect("standard layout"));
            out.push(l.ff_b2.as_slice_mut().expect("standard layout"));
        }
        out.push(self.final_norm.gain.as_slice_mut().expect("standard layout"));
        out.push(self.final_norm.offset.as_slice_mut().expect("standard layout"));
        out.push(self.out_w.as_slice_mut().expect("standard layout"));
        out.push(self.out_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// Elementwise `self += scale * other`.
    pub fn add_scaled(&mut self, other: &LmParams, scale: f64) {
        let mut mine = self.tensors_mut();
        let theirs = other.named_tensors();
        debug_assert_eq!(mine.len(), theirs.len());
        for (dst, (_, _, src)) in mine.iter_mut().zip(theirs.iter()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += scale * s;
            }
        }
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, _, d)| d.iter().all(|x| x.is_finite()))
    }

    /// Global L2 norm over all entries.
    pub fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, _, d)| d.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Read one coordinate by flat index. Indexing follows the canonical
    /// tensor order; used by finite-difference checks.
    pub fn flat_get(&self, mut idx: usize) -> Option<f64> {
        for (_, _, data) in self.named_tensors() {
            if idx < data.len() {
                return Some(data[idx]);
            }
            idx -= data.len();
        }
        None
    }

    /// Write one coordinate by flat index.
    pub fn flat_set(&mut self, mut idx: usize, value: f64) -> bool {
        for t in self.tensors_mut() {
            if idx < t.len() {
                t[idx] = value;
                return true;
            }
            idx -= t.len();
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_config() -> LmConfig {
        LmConfig {
            vocab_size: 11,
            context_length: 12,
            embedding_dim: 8,
            num_layers: 1,
            num_heads: 2,
            feed_forward_dim: 16,
            dropout: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn same_seed_gives_bitwise_identical_params() {
        let cfg = micro_config();
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = micro_config();
        let a = init_params(&cfg).unwrap();
        let b = init_params(&LmConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn head_dim_is_embedding_over_heads() {
        let cfg = LmConfig { embedding_dim: 32, num_heads: 4, ..micro_config() };
        assert_eq!(cfg.head_dim(), 8);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = LmConfig { embedding_dim: 10, num_heads: 4, ..micro_config() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn flat_indexing_covers_every_coordinate_once() {
        let cfg = micro_config();
        let mut p = init_params(&cfg).unwrap();
        let n = p.num_params();
        assert!(p.flat_get(n).is_none());
        let before = p.flat_get(0).unwrap();
        p.flat_set(0, before + 1.0);
        assert_eq!(p.flat_get(0).unwrap(), before + 1.0);
        // Mutable and named views agree in order and size.
        let sizes_named: Vec<usize> = p.named_tensors().iter().map(|(_, _, d)| d.len()).collect();
        let sizes_mut: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(sizes_named, sizes_mut);
    }

    #[test]
    fn biases_and_offsets_start_at_zero_gains_at_one() {
        let p = init_params(&micro_config()).unwrap();
        assert!(p.out_b.iter().all(|&x| x == 0.0));
        assert!(p.layers[0].bq.iter().all(|&x| x == 0.0));
        assert!(p.final_norm.offset.iter().all(|&x| x == 0.0));
        assert!(p.final_norm.gain.iter().all(|&x| x == 1.0));
    }
}

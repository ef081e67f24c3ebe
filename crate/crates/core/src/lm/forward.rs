//! Full forward pass with activation caching and the matching analytic
//! backward pass.
//!
//! The architecture is a pre-norm transformer: embeddings, `num_layers`
//! blocks of (layer-norm, causal multi-head attention, residual) then
//! (layer-norm, GELU feed-forward, residual), a final layer-norm and a
//! linear projection to vocabulary logits. Everything runs in `f64` so
//! finite-difference gradient checks hold to tight tolerances.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenId;
use crate::error::{Error, Result};

use super::params::{LmConfig, LmParams, NormParams};

pub(crate) const LN_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, p: &NormParams) -> (Array2<f64>, NormCache) {
    let (t, d) = x.dim();
    let mut xhat = Array2::zeros((t, d));
    let mut rstd = Array1::zeros(t);
    let mut y = Array2::zeros((t, d));
    for i in 0..t {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[[i, j]] = h;
            y[[i, j]] = p.gain[j] * h + p.offset[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Backward through a layer-norm. Accumulates parameter gradients into
/// `grad` and returns the gradient w.r.t. the input.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    p: &NormParams,
    grad: &mut NormParams,
) -> Array2<f64> {
    let (t, d) = dy.dim();
    let mut dx = Array2::zeros((t, d));
    for i in 0..t {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            let dxhat = dy[[i, j]] * p.gain[j];
            let h = cache.xhat[[i, j]];
            grad.gain[j] += dy[[i, j]] * h;
            grad.offset[j] += dy[[i, j]];
            m1 += dxhat;
            m2 += dxhat * h;
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            let dxhat = dy[[i, j]] * p.gain[j];
            dx[[i, j]] = r * (dxhat - m1 - cache.xhat[[i, j]] * m2);
        }
    }
    dx
}

/// Row-wise softmax over the causal prefix; future positions get zero.
fn causal_softmax_inplace(scores: &mut Array2<f64>) {
    let t = scores.nrows();
    for i in 0..t {
        let valid = i + 1;
        let mut row = scores.row_mut(i);
        let mut maxv = f64::NEG_INFINITY;
        for j in 0..valid {
            maxv = maxv.max(row[j]);
        }
        let mut sum = 0.0;
        for j in 0..valid {
            let e = (row[j] - maxv).exp();
            row[j] = e;
            sum += e;
        }
        for j in 0..valid {
            row[j] /= sum;
        }
        for j in valid..t {
            row[j] = 0.0;
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: NormCache,
    y1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention probabilities per head, each `[T, T]` with zeros above the
    /// diagonal.
    probs: Vec<Array2<f64>>,
    /// Concatenated head outputs before the output projection.
    ctx: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    ln2: NormCache,
    y2: Array2<f64>,
    h1: Array2<f64>,
    act: Array2<f64>,
    ff_drop: Option<Array2<f64>>,
}

/// Everything the backward pass needs, plus the public outputs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<TokenId>,
    layers: Vec<LayerCache>,
    final_ln: NormCache,
    /// Final-norm output, the contextual embedding of each position.
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

fn validate_ids(ids: &[TokenId], config: &LmConfig) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::EmptySequence("model input"));
    }
    if ids.len() > config.context_length {
        return Err(Error::SequenceTooLong { len: ids.len(), context: config.context_length });
    }
    for &id in ids {
        if (id as usize) >= config.vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab: config.vocab_size });
        }
    }
    Ok(())
}

fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Forward pass keeping every intermediate needed for `backward`. Dropout is
/// applied to the two residual branches only when `dropout` is provided.
pub fn forward_cached(
    params: &LmParams,
    config: &LmConfig,
    ids: &[TokenId],
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<ForwardCache> {
    validate_ids(ids, config)?;
    let t = ids.len();
    let d = config.embedding_dim;
    let heads = config.num_heads;
    let hd = config.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();

    let mut x = Array2::zeros((t, d));
    for (i, &id) in ids.iter().enumerate() {
        let row = &params.tok_emb.row(id as usize) + &params.pos_emb.row(i);
        x.row_mut(i).assign(&row);
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for l in &params.layers {
        let (y1, ln1) = layer_norm(&x, &l.norm1);
        let q = y1.dot(&l.wq) + &l.bq;
        let k = y1.dot(&l.wk) + &l.bk;
        let v = y1.dot(&l.wv) + &l.bv;

        let mut probs = Vec::with_capacity(heads);
        let mut ctx = Array2::zeros((t, d));
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            let qh = q.slice(s![.., cols.clone()]);
            let kh = k.slice(s![.., cols.clone()]);
            let vh = v.slice(s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            causal_softmax_inplace(&mut scores);
            let ctx_h = scores.dot(&vh);
            ctx.slice_mut(s![.., cols]).assign(&ctx_h);
            probs.push(scores);
        }

        let mut attn_out = ctx.dot(&l.wo) + &l.bo;
        let attn_drop = match &mut dropout {
            Some((rate, rng)) if *rate > 0.0 => {
                let mask = dropout_mask((t, d), *rate, rng);
                attn_out *= &mask;
                Some(mask)
            }
            _ => None,
        };
        x += &attn_out;

        let (y2, ln2) = layer_norm(&x, &l.norm2);
        let h1 = y2.dot(&l.ff_w1) + &l.ff_b1;
        let act = h1.mapv(gelu);
        let mut ff_out = act.dot(&l.ff_w2) + &l.ff_b2;
        let ff_drop = match &mut dropout {
            Some((rate, rng)) if *rate > 0.0 => {
                let mask = dropout_mask((t, d), *rate, rng);
                ff_out *= &mask;
                Some(mask)
            }
            _ => None,
        };
        x += &ff_out;

        layers.push(LayerCache {
            ln1,
            y1,
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            ln2,
            y2,
            h1,
            act,
            ff_drop,
        });
    }

    let (hidden, final_ln) = layer_norm(&x, &params.final_norm);
    let logits = hidden.dot(&params.out_w) + &params.out_b;

    Ok(ForwardCache { ids: ids.to_vec(), layers, final_ln, hidden, logits })
}

/// Per-position logits over the vocabulary. Position `t` depends only on
/// positions `<= t`.
pub fn forward(params: &LmParams, config: &LmConfig, ids: &[TokenId]) -> Result<Array2<f64>> {
    Ok(forward_cached(params, config, ids, None)?.logits)
}

/// Contextual embedding of each position: the final-layer-norm output before
/// the vocabulary projection.
pub fn hidden_states(params: &LmParams, config: &LmConfig, ids: &[TokenId]) -> Result<Array2<f64>> {
    Ok(forward_cached(params, config, ids, None)?.hidden)
}

/// Backward pass from logit gradients to parameter gradients.
pub fn backward(
    params: &LmParams,
    config: &LmConfig,
    cache: &ForwardCache,
    dlogits: &Array2<f64>,
) -> Result<LmParams> {
    let t = cache.ids.len();
    let d = config.embedding_dim;
    let heads = config.num_heads;
    let hd = config.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    if dlogits.dim() != cache.logits.dim() {
        return Err(Error::ShapeMismatch(format!(
            "dlogits {:?} vs logits {:?}",
            dlogits.dim(),
            cache.logits.dim()
        )));
    }

    let mut g = LmParams::zeros(config);

    g.out_w += &cache.hidden.t().dot(dlogits);
    g.out_b += &dlogits.sum_axis(Axis(0));
    let dhidden = dlogits.dot(&params.out_w.t());
    let mut dx = layer_norm_backward(&dhidden, &cache.final_ln, &params.final_norm, &mut g.final_norm);

    for (li, l) in params.layers.iter().enumerate().rev() {
        let c = &cache.layers[li];
        let gl = &mut g.layers[li];

        // Feed-forward block.
        let dff = match &c.ff_drop {
            Some(mask) => &dx * mask,
            None => dx.clone(),
        };
        gl.ff_w2 += &c.act.t().dot(&dff);
        gl.ff_b2 += &dff.sum_axis(Axis(0));
        let dact = dff.dot(&l.ff_w2.t());
        let dh1 = &dact * &c.h1.mapv(gelu_prime);
        gl.ff_w1 += &c.y2.t().dot(&dh1);
        gl.ff_b1 += &dh1.sum_axis(Axis(0));
        let dy2 = dh1.dot(&l.ff_w1.t());
        dx += &layer_norm_backward(&dy2, &c.ln2, &l.norm2, &mut gl.norm2);

        // Attention block.
        let dattn = match &c.attn_drop {
            Some(mask) => &dx * mask,
            None => dx.clone(),
        };
        gl.wo += &c.ctx.t().dot(&dattn);
        gl.bo += &dattn.sum_axis(Axis(0));
        let dctx = dattn.dot(&l.wo.t());

        let mut dq = Array2::zeros((t, d));
        let mut dk = Array2::zeros((t, d));
        let mut dv = Array2::zeros((t, d));
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            let p = &c.probs[h];
            let dctx_h = dctx.slice(s![.., cols.clone()]);
            let kh = c.k.slice(s![.., cols.clone()]);
            let qh = c.q.slice(s![.., cols.clone()]);
            let vh = c.v.slice(s![.., cols.clone()]);

            let dp = dctx_h.dot(&vh.t());
            dv.slice_mut(s![.., cols.clone()]).assign(&p.t().dot(&dctx_h));

            // Softmax backward per row; masked entries have p = 0.
            let mut ds = Array2::zeros((t, t));
            for i in 0..t {
                let mut dot = 0.0;
                for j in 0..=i {
                    dot += dp[[i, j]] * p[[i, j]];
                }
                for j in 0..=i {
                    ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot);
                }
            }
            ds *= scale;
            dq.slice_mut(s![.., cols.clone()]).assign(&ds.dot(&kh));
            dk.slice_mut(s![.., cols]).assign(&ds.t().dot(&qh));
        }

        gl.wq += &c.y1.t().dot(&dq);
        gl.bq += &dq.sum_axis(Axis(0));
        gl.wk += &c.y1.t().dot(&dk);
        gl.bk += &dk.sum_axis(Axis(0));
        gl.wv += &c.y1.t().dot(&dv);
        gl.bv += &dv.sum_axis(Axis(0));

        let dy1 = dq.dot(&l.wq.t()) + dk.dot(&l.wk.t()) + dv.dot(&l.wv.t());
        dx += &layer_norm_backward(&dy1, &c.ln1, &l.norm1, &mut gl.norm1);
    }

    for (i, &id) in cache.ids.iter().enumerate() {
        let row = dx.row(i);
        let mut emb = g.tok_emb.row_mut(id as usize);
        emb += &row;
        let mut pos = g.pos_emb.row_mut(i);
        pos += &row;
    }

    Ok(g)
}

/// Numerically stable log-softmax of one logits row.
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = maxv + row.iter().map(|&z| (z - maxv).exp()).sum::<f64>().ln();
    row.iter().map(|&z| z - lse).collect()
}

//! Contextual embedding contracts.
//!
//! Similarity scoring and post-decoding clustering both consume embeddings
//! through these traits, so tests can substitute hand-built vectors and the
//! pipeline can plug in the frozen base model. Keeping the scorer on the
//! base model (not the policy being optimized) stops the reward from
//! drifting with the thing it measures.

use ndarray::{Array1, Array2, Axis};

use crate::corpus::{TokenId, BOS};
use crate::error::{Error, Result};
use crate::lm::{hidden_states, LmConfig, LmParams};

/// One contextual vector per token.
pub trait TokenEmbedder: Sync {
    fn embed_tokens(&self, tokens: &[TokenId]) -> Result<Array2<f64>>;
}

/// One vector per sentence.
pub trait SentenceEmbedder: Sync {
    fn embed_sentence(&self, tokens: &[TokenId]) -> Result<Array1<f64>>;
}

/// Any token embedder pools to a sentence embedder by averaging.
impl<T: TokenEmbedder> SentenceEmbedder for T {
    fn embed_sentence(&self, tokens: &[TokenId]) -> Result<Array1<f64>> {
        let e = self.embed_tokens(tokens)?;
        Ok(e.mean_axis(Axis(0)).expect("non-empty embedding matrix"))
    }
}

/// Embeddings from a frozen language model: final-layer hidden states of
/// `[BOS, tokens...]` at the token positions.
pub struct LmEmbedder<'a> {
    pub params: &'a LmParams,
    pub config: &'a LmConfig,
}

impl TokenEmbedder for LmEmbedder<'_> {
    fn embed_tokens(&self, tokens: &[TokenId]) -> Result<Array2<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence("embedding input"));
        }
        let keep = tokens.len().min(self.config.context_length - 1);
        let mut ids = Vec::with_capacity(keep + 1);
        ids.push(BOS);
        ids.extend_from_slice(&tokens[..keep]);
        let states = hidden_states(self.params, self.config, &ids)?;
        let mut out = states.slice(ndarray::s![1.., ..]).to_owned();
        // A truncated tail reuses the last in-window embedding so the shape
        // contract (one row per input token) still holds.
        while out.nrows() < tokens.len() {
            let last = out.row(out.nrows() - 1).to_owned();
            out.push_row(last.view()).expect("row shape");
        }
        Ok(out)
    }
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

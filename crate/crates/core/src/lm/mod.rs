//! Tiny from-scratch autoregressive transformer.
//!
//! The same network serves three roles along the pipeline: the base model
//! (trained on utterances without conditions, the KL anchor for one-shot
//! adaptation and the embedder behind similarity scoring), the zero-shot
//! model (fine-tuned on condition-prefixed examples) and the per-intent
//! adapted models the PPO stage produces.

mod checkpoint;
mod forward;
mod loss;
mod params;
mod session;
mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, save_checkpoint};
pub use forward::{backward, forward, forward_cached, hidden_states, log_softmax_row, ForwardCache};
pub use loss::{
    nll_dlogits, nll_from_logits, nll_loss, nll_sum_from_logits, sequence_log_prob_example,
};
pub use params::{init_params, LayerParams, LmConfig, LmParams, NormParams};
pub use session::DecodeState;
pub use train::{clip_global_norm, mean_dataset_loss, train, AdamState, TrainHyper, TrainReport};

use crate::corpus::{encode_from_ids, IntentSpec, TokenId, Vocabulary};
use crate::error::{Error, Result};

/// Log-probability of `utterance_tokens` followed by EOS, conditioned on the
/// intent description. Sum of per-token log-softmax terms over the unmasked
/// span; always `<= 0`. Errors when the encoded sequence does not fit the
/// context window.
pub fn sequence_log_prob(
    params: &LmParams,
    config: &LmConfig,
    intent: &IntentSpec,
    utterance_tokens: &[TokenId],
    vocab: &Vocabulary,
) -> Result<f64> {
    let desc_ids = vocab.encode_words(&intent.description_words());
    let example = encode_from_ids(&desc_ids, utterance_tokens, config.context_length)?;
    if example.truncated {
        return Err(Error::SequenceTooLong {
            len: desc_ids.len() + utterance_tokens.len() + 4,
            context: config.context_length,
        });
    }
    sequence_log_prob_example(params, config, &example)
}

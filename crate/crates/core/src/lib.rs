//! Desk-scale laboratory for generating task-oriented utterances from intent
//! descriptions.
//!
//! The pipeline mirrors the usual data-augmentation loop for intent
//! classification: train a small conditional language model on utterances
//! from seen intents, generate utterances for unseen intents from their
//! descriptions alone (zero-shot), optionally adapt the generator per intent
//! with a single reference utterance via PPO (one-shot), and score the
//! resulting datasets with diversity, fluency and classifier-accuracy
//! metrics.
//!
//! Modules:
//! - [`corpus`]: dataset model, word-level tokenization, condition encoding
//!   with masking, seen/unseen split protocol.
//! - [`lm`]: tiny autoregressive transformer with masked-condition NLL
//!   training, checkpointing, and incremental decode sessions.
//! - [`decoding`]: beam search, top-k, nucleus sampling and post-decoding
//!   clustering over any model implementing the decode contract.
//! - [`oneshot`]: similarity + diversity reward and the clipped PPO update
//!   with entropy bonus and KL anchor to the unconditioned base model.
//! - [`eval`]: Dist-k / Ent-k, n-gram logistic-regression intent classifier,
//!   rule-based fluency checks, and keyword shift probes.

pub mod corpus;
pub mod decoding;
pub mod embed;
pub mod error;
pub mod eval;
pub mod lm;
pub mod oneshot;

pub use error::{Error, Result};

//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A record line that failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    /// A split plan referenced a service or intent missing from the corpus.
    #[error("split plan references unknown {kind} '{name}'")]
    UnknownInPlan { kind: &'static str, name: String },

    #[error("invalid split plan: {0}")]
    InvalidPlan(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    /// The condition span alone does not fit the context window. Utterances
    /// are truncated to fit but the condition never is.
    #[error("condition needs {needed} positions but the context window is {context}")]
    ConditionTooLong { needed: usize, context: usize },

    #[error("sequence of length {len} exceeds context window {context}")]
    SequenceTooLong { len: usize, context: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Non-finite loss or objective. Carries enough context to locate the
    /// offending batch or step.
    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("empty sequence: {0}")]
    EmptySequence(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("batch too small: {0}")]
    BatchTooSmall(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("intent class '{0}' missing from one side of the classifier split")]
    ClassMissing(String),

    #[error("missing reference example for intent '{0}'")]
    MissingReference(String),
}

impl Error {
    /// True for aborts caused by non-finite numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

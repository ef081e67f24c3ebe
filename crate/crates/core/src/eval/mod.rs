//! Automated evaluation.

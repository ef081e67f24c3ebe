//! Generation strategies.

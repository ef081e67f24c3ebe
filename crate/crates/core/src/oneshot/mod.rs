//! One-shot PPO adaptation.

//! Entity-relationship aware unsupervised video summarization.
//!
//! The pipeline scores video frames with a spatio-temporal graph network over
//! detected entities fused with scene features, trains the scorer adversarially
//! against a patch-level Wasserstein critic around a sequence VAE, and
//! evaluates summaries with the key-shot protocol (knapsack selection at a
//! 15% budget, harmonic F-measure against user summaries).

pub mod dataset;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod critic;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod stgraph;
pub mod summarizer;
pub mod training;
pub mod vae;

pub use error::{EraError, Result};

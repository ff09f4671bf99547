//! Two-step multi-resolution training for expression-style image
//! classification, desk-scale: a from-scratch CNN with reverse-mode
//! autodiff, a deterministic augmentation pipeline, a curriculum
//! multi-resolution sampler, dataset ingestion with class-imbalance
//! weighting, and a full evaluation stack (accuracy protocols, k-fold,
//! confusion matrices, and content-based image retrieval).
//!
//! Everything is reproducible from a single u64 seed. See the `examples/`
//! directory for runnable entry points per capability, or the `mafer`
//! binary for the command-line surface.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod imageops;
pub mod multires;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;

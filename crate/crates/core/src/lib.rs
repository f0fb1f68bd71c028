//! Taxonomy-driven pre-training toolkit.
//!
//! The pipeline ingests a multilingual occupation/skill taxonomy, samples
//! concept pairs labeled with their graph relation (random, linked through an
//! occupation page, or grouped under a shared major group), builds paired
//! segment inputs with dynamic masking, and trains a small transformer encoder
//! on the joint masked-token + relation-prediction objective. A separate
//! [`metrics`] module covers span-level, ranking and classification evaluation.
//!
//! Data-parallel loops (batch sampling, masking, per-instance gradients,
//! metric sharding) run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise. Both paths produce identical
//! results: every random stream is derived from `(seed, label, index)` and
//! every reduction is performed in index order.

pub mod cli;
pub mod config;
pub mod error;
pub mod masking;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod taxonomy;
pub mod tokenizer;

pub use error::{Error, Result};

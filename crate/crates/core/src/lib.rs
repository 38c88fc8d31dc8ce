//! A desk-scale laboratory for learned clause selection in a saturation
//! theorem prover.
//!
//! The crate is organised around a small resolution prover whose given-clause
//! selection is driven by weighted priority queues. Clause weights can come
//! from built-in heuristics or from trained models: an L2-regularised logistic
//! classifier, a gradient-boosted tree ensemble, or a recursive neural network
//! that embeds shared terms. Feature extraction, feature hashing, training
//! pipelines, and an experiment harness with a bundled problem generator tie
//! the pieces together.

pub mod features;
pub mod harness;
pub mod hashing;
pub mod model_linear;
pub mod model_neural;
pub mod model_trees;
pub mod prover;
pub mod termbank;

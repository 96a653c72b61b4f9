//! Bidirectional-mapping coupled GAN for generalized zero-shot learning.
//!
//! A conditional generator synthesizes visual features from class attribute
//! vectors. Per-domain regressors map generated features back to attributes
//! and are judged by a pair of semantic discriminators sharing their final
//! layer; a conditional Wasserstein critic supervises seen-class features,
//! and its hidden layer provides the embedding used for the push/pull and
//! center terms and for classification at test time.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};

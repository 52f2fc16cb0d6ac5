//! Targeted mini-batch training.
//!
//! Training inputs are scored by how similar they are to a small set of
//! unlabeled target inputs, and SGD mini-batches are then drawn in proportion
//! to those scores. Two equivalent mechanisms are provided:
//!
//! - weighted batching: every batch is drawn from an [`sampling::AliasTable`]
//!   built over the similarity distribution;
//! - resampling: a new dataset of `floor(t * n)` rows is drawn once from the
//!   same distribution and handed to an ordinary shuffled-epoch trainer.
//!
//! Module map:
//!
//! - [`data`]: CSV/IDX loading, standardization, target splits, synthetic data
//! - [`similarity`]: thresholded cosine-max similarity to a target set
//! - [`sampling`]: sampling plans, alias tables, batch drawing and resampling
//! - [`nn`]: a small f64 network kernel (dense, conv, ReLU, max-pool) with
//!   reverse-mode gradients and constant-rate SGD
//! - [`experiment`]: paired-split comparisons, aggregate curves, manifests and
//!   plot-ready outputs

pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod nn;
pub mod rng;
pub mod sampling;
pub mod similarity;

pub use error::{Error, Result};

//! Masked hierarchical cluster-wise contrastive learning for multivariate
//! time series.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evalmetrics;
pub mod hclust;
pub mod loss;
pub mod matrix;
pub mod pairsel;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

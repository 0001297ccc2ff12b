//! Pairwise multinomial Markov random fields: exact inference baselines,
//! reweighted message passing, parameter estimation, denoising prediction,
//! and performance-gap bounds.

pub mod bound;
pub mod config;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod experiment;
pub mod gibbs;
pub mod graph;
pub mod model;
pub mod polytope;
pub mod predict;
pub mod seed;
pub mod spanning;
pub mod transfer;
pub mod trw;
pub(crate) mod util;

pub use error::{MrfError, Result};

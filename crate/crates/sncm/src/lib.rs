//! Bayesian variable selection for censored skew-normal mixture regression.
//!
//! The model treats a left-censored response as a two-part mixture: a
//! Bernoulli "detectable" indicator and a skew-normal regression for the
//! latent level, fit by data-augmentation Gibbs sampling with spike-and-slab
//! selection under an independent Bernoulli or Markov random field prior
//! over inclusion indicators.

pub mod distributions;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod posterior;
pub mod model;
pub mod mrf;
pub mod relmatrix;
pub mod simlab;

pub use error::{Result, SncmError};

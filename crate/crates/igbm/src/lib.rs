//! Exact information geometry for binary multivariate distributions, with
//! Boltzmann machine training and confidence-ranked parameter selection.
//!
//! The crate works at desk scale: distributions over n <= 20 binary variables
//! are enumerated exactly as 2^n cell tables, so every quantity (moments,
//! natural parameters, Fisher matrices, likelihood gradients) is computed in
//! closed form rather than approximated by sampling.

#![forbid(unsafe_code)]

pub mod boltzmann;
pub mod coords;
pub mod error;
pub mod fisher;
pub mod cif;
pub mod harness;
pub mod linalg;
pub mod samples;
pub mod selection;
pub mod stream;
pub mod subset;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

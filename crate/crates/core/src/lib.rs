//! Exact, desk-scale computation of functional-inequality constants for
//! finite Markov generators: spectral gap, entropy constant, log-Sobolev and
//! modified log-Sobolev constants on weighted graphs, hypergraph block
//! dynamics, synchronous multi-particle chains, permutation shuffles and
//! Bernoulli–Laplace slices.
//!
//! Everything is enumerated exactly: state spaces are listed, generators are
//! dense, spectra come from a symmetric eigensolver and the entropy-type
//! constants from a multistart fractional-programming optimizer backed by a
//! closed candidate set.

pub mod constants;
pub mod decay;
pub mod error;
pub mod functionals;
pub mod generators;
pub mod permanent;
pub mod reduction;
pub mod state_spaces;

pub use error::{Error, Result};

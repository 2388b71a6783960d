//! Simulation core for a model-centric process of scientific discovery.
//!
//! Covers the space of hierarchical linear models, data generation,
//! score-based model comparison, proposal strategies, Markov chain
//! analysis of replicator-free populations and the full agent-based
//! process.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod abm;
pub mod chain;
pub mod data_gen;
pub mod error;
pub mod linalg;
pub mod model_space;
pub mod rng;
pub mod selection;
pub mod strategies;

pub use error::{Error, FitError, Result};
pub use model_space::{ModelSpace, ModelSpec, Term};

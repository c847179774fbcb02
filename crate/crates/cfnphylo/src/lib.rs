//! Simulation and reconstruction of two-state symmetric (CFN) broadcast
//! processes on balanced trees: recursive-majority ancestral estimation,
//! distance and four-point topology recovery, and an exact
//! information-theoretic toolkit for the matching lower bounds.

pub mod distance;
pub mod error;
pub mod experiment;
pub mod four_point;
pub mod info;
pub mod majority;
pub mod newick;
pub mod reconstruct;
pub mod sample;
pub mod seed;
pub mod tree;

pub use error::{Error, Result};

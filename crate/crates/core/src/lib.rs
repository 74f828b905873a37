//! Metric mean dimension tooling: separated and spanning counts along
//! orbits, finite-scale mean dimension estimates, Katok ε-entropy, and
//! explicit volume-preserving pseudo-horseshoes with exact verification.

pub mod affine;
pub mod cli;
pub mod complexity;
pub mod error;
pub mod geometry;
pub mod horseshoe;
pub mod katok;
pub mod markov_check;
pub mod systems;

pub use error::{Error, Result};

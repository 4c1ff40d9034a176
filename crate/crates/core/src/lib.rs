//! Inflation bounds for triangle-network distributions that are invariant
//! under output permutations.

// Dense numeric kernels index several parallel arrays by the same loop variable.
#![allow(clippy::needless_range_loop)]

pub mod bound;
pub mod certify;
pub mod constraint;
pub mod local;
pub mod lp;
pub mod opi;
pub mod orbit;
pub mod scalar;

pub use opi::{OpiCorrelators, OpiDistribution, OpiError};
pub use orbit::{build_matrix, enumerate_outcome_orbits, enumerate_words, CorrelatorMatrix, OrbitError, Word};
pub use scalar::{Rational, Scalar};

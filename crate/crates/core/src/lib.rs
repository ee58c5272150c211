//! Random lifts of matrix-weighted graphs and the spectra of their free-group limits.

pub mod freelimit;
pub mod graphs;
pub mod lift;
pub mod model;
pub mod nonbacktracking;
pub mod numerics;
pub mod proofchecks;
pub mod rng;
pub mod scalar;
pub mod spectral_set;

pub use num_complex::Complex64;

/// Double-precision complex matrix used throughout the non-generic modules.
pub type CMatrix = numerics::CMat<f64>;

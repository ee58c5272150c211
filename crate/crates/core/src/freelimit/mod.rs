//! The limiting operator `A★` on the free product: tree resolvent, the CP
//! map `L`, the spectrum-membership test, spectrum scans and edges, and
//! free moments.

mod cpmap;
mod moments;
mod resolvent;
mod scan;

use num_complex::Complex64;
use thiserror::Error;

pub use cpmap::{
    build_l, cp_radius, cp_radius_from, gelfand_blocks, gelfand_crosscheck, min_block_eigenvalue, rho_b_star,
    CPMapL, CpRadius, CP_MAX_ITER, CP_TOL,
};
pub use moments::{free_moment, free_moment_complex, MAX_MOMENT_ORDER};
pub use resolvent::{
    herglotz_margin, is_herglotz, refine_resolvent, solve_resolvent, ResolventOptions, ResolventState,
    HERGLOTZ_TOL,
};
pub use scan::{
    is_in_limit_spectrum, limit_spectrum_scan, membership, spectral_edge, spectral_edge_with, write_diag_csv, Membership,
    MembershipOptions, ScanOptions, ScanResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreeLimitError {
    #[error("resolvent iteration did not converge at eta = {eta:e} (residual {residual:e} after {iterations} iterations)")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        eta: f64,
        /// Last state that did converge, at a larger `η`.
        last: Option<Box<ResolventState>>,
    },
    #[error("singular matrix while evaluating the resolvent at z = {z}")]
    SingularIteration { z: Complex64 },
    #[error("power iteration for the CP map did not converge (estimate {estimate}, {iterations} iterations)")]
    CpNoConvergence { estimate: f64, iterations: usize },
    #[error("weight system must be symmetric")]
    NotSymmetric,
    #[error("moment order {k} too large (limit {max}, or ball too large)")]
    DepthTooLarge { k: usize, max: usize },
    #[error("no spectrum found in the scanned range")]
    EmptySpectrum,
}

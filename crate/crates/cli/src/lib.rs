//! Reproducible experiments on random lifts: limit spectra, sampled spectra,
//! tensor spectra, tangles and the combined comparison report.
//!
//! Every command is a pure function of its arguments. All randomness comes
//! from one user seed through [`sample_seed`].

mod report;

use std::fs;
use std::path::{Path, PathBuf};

use liftspec_core::freelimit::{self, FreeLimitError, ScanOptions, ScanResult};
use liftspec_core::graphs::{self, GraphError, MAX_CYCLE_LENGTH};
use liftspec_core::lift::{self, LanczosOptions, LiftError, LiftOperator, RitzPair};
use liftspec_core::model::{self, ModelError, PermutationFamily, WeightSystem};
use liftspec_core::nonbacktracking::{self, build_b};
use liftspec_core::rng::split_seed;
use liftspec_core::spectral_set::{SpectralSet, SpectralSetJson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    run_experiment, CheckResult, ExperimentConfig, ExperimentReport, SampleReport, SizeSummary, Thresholds, REPORT_VERSION,
};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "LIFTSPEC_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    /// Process exit code: 1 validation, 2 non-convergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { path, message } => CliError::Io { path, message },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FreeLimitError> for CliError {
    fn from(e: FreeLimitError) -> Self {
        match e {
            FreeLimitError::NoConvergence { .. }
            | FreeLimitError::CpNoConvergence { .. }
            | FreeLimitError::SingularIteration { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<LiftError> for CliError {
    fn from(e: LiftError) -> Self {
        match e {
            LiftError::NoConvergence { .. } | LiftError::Numerics(_) => CliError::NonConvergence(e.to_string()),
            LiftError::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Where the weight system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WsSource {
    /// `figure1` or `regular:<d>`.
    Preset(String),
    File(PathBuf),
    /// Weight-system JSON text.
    Inline(String),
}

impl WsSource {
    pub fn load(&self) -> Result<WeightSystem, CliError> {
        let ws = match self {
            WsSource::Preset(name) => model::preset(name)?,
            WsSource::File(path) => model::load_weight_system(path)?,
            WsSource::Inline(text) => model::weight_system_from_json(text)?,
        };
        ws.ensure_valid()?;
        Ok(ws)
    }
}

/// Seed of the permutation sample number `stream` at size `n`.
///
/// `split_seed(split_seed(seed, n), stream)`; stream 0 is what the
/// single-sample commands use, so `spectrum --n N --seed S` reproduces the
/// first sample of an experiment at size `N`.
pub fn sample_seed(seed: u64, n: usize, stream: u64) -> u64 {
    split_seed(split_seed(seed, n as u64), stream)
}

/// Uniform symmetric family for `ws` at size `n`.
pub fn sample_family(ws: &WeightSystem, n: usize, seed: u64) -> Result<PermutationFamily, CliError> {
    if n < 2 {
        return Err(CliError::Validation(format!("n = {n} must be at least 2")));
    }
    let q = ws
        .canonical_q()
        .ok_or_else(|| CliError::Validation("involution is not in canonical form".into()))?;
    Ok(model::sample_symmetric(n, q, ws.d, seed)?)
}

/// Default tangle radius `⌊ln n / (4 ln(d-1))⌋`, at least 1.
pub fn default_tangle_ell(n: usize, d: usize) -> usize {
    if d <= 2 {
        return 1;
    }
    let ell = (n as f64).ln() / (4.0 * ((d - 1) as f64).ln());
    (ell.floor() as usize).max(1)
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::Validation(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

pub(crate) fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn scan_options(grid_step: f64, refine_tol: f64) -> Result<ScanOptions, CliError> {
    check_positive("grid step", grid_step)?;
    check_positive("refine tolerance", refine_tol)?;
    Ok(ScanOptions {
        grid_step,
        refine_tol,
        ..ScanOptions::default()
    })
}

/// Limit spectrum scan, written as `limit.json` and `diag.csv`.
///
/// Returns the scan even when some grid points fell back to the density
/// diagnostic; callers decide whether that counts as non-convergence.
pub fn cmd_limit(ws: &WeightSystem, opts: &ScanOptions, out: &Path) -> Result<ScanResult, CliError> {
    let scan = freelimit::limit_spectrum_scan(ws, opts)?;
    write_limit_outputs(&scan, out)?;
    Ok(scan)
}

pub(crate) fn write_limit_outputs(scan: &ScanResult, out: &Path) -> Result<(), CliError> {
    let mut json = scan.set.to_json();
    json.push('\n');
    write_file(out, "limit.json", json.as_bytes())?;
    let mut diag = Vec::new();
    freelimit::write_diag_csv(&scan.rows, &mut diag).map_err(|e| CliError::io(&out.join("diag.csv"), e))?;
    write_file(out, "diag.csv", &diag)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dense when the matrix has at most `dense_max` rows, Lanczos otherwise.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    pub method: Method,
    /// Eigenvalues per end for the Lanczos path.
    pub k: usize,
    pub tol: f64,
    pub dense_max: usize,
    /// Certify dense eigenvalues with eigenvector residuals (several times
    /// slower than eigenvalues alone).
    pub residuals: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            k: 6,
            tol: 1e-8,
            dense_max: 2500,
            residuals: true,
        }
    }
}

/// One eigenvalue with its 1-based position in the full ascending spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedEigenvalue {
    pub index: usize,
    pub value: f64,
    /// `|Av - λv|`; `None` when only eigenvalues were computed.
    pub residual: Option<f64>,
}

/// Spectrum of `A` on `H_0`: every eigenvalue on the dense path, the
/// `k` smallest and `k` largest on the Lanczos path.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub dense: bool,
    pub dim: usize,
    pub rows: Vec<IndexedEigenvalue>,
}

impl Spectrum {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|e| e.value).collect()
    }

    pub fn set(&self) -> SpectralSet {
        SpectralSet::finite(self.values())
    }

    pub fn min(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |e| e.value)
    }

    pub fn max(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |e| e.value)
    }

    /// Spectral radius of the computed part.
    pub fn radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue", "residual"])?;
        for e in &self.rows {
            let res = e.residual.map_or(String::new(), |r| format!("{r:.3e}"));
            w.write_record([e.index.to_string(), format!("{:.17e}", e.value), res])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn merge_extremes(dim: usize, low: &[RitzPair], high: &[RitzPair]) -> Vec<IndexedEigenvalue> {
    let mut rows: Vec<IndexedEigenvalue> = low
        .iter()
        .enumerate()
        .map(|(j, p)| IndexedEigenvalue {
            index: j + 1,
            value: p.value,
            residual: Some(p.residual),
        })
        .collect();
    for (j, p) in high.iter().enumerate() {
        let index = dim - j;
        if rows.iter().all(|e| e.index != index) {
            rows.push(IndexedEigenvalue {
                index,
                value: p.value,
                residual: Some(p.residual),
            });
        }
    }
    rows.sort_by_key(|e| e.index);
    rows
}

pub fn lift_spectrum(op: &LiftOperator, opts: &SpectrumOptions) -> Result<Spectrum, CliError> {
    let dim = op.r() * (op.n() - 1);
    let dense = match opts.method {
        Method::Dense => true,
        Method::Lanczos => false,
        Method::Auto => dim <= opts.dense_max,
    };
    if dense {
        let pairs: Vec<(f64, Option<f64>)> = if opts.residuals {
            lift::dense_spectrum_h0_with_residuals(op)?
                .into_iter()
                .map(|(v, r)| (v, Some(r)))
                .collect()
        } else {
            match lift::dense_spectrum_h0(op)? {
                SpectralSet::Finite(v) => v.into_iter().map(|x| (x, None)).collect(),
                SpectralSet::Union { .. } => unreachable!("dense spectra are finite"),
            }
        };
        let rows = pairs
            .into_iter()
            .enumerate()
            .map(|(j, (value, residual))| IndexedEigenvalue {
                index: j + 1,
                value,
                residual,
            })
            .collect();
        return Ok(Spectrum { dense, dim, rows });
    }
    if opts.k == 0 {
        return Err(CliError::Validation("k must be at least 1".into()));
    }
    let (low, high) = lift::extreme_eigs_h0_with(op, &LanczosOptions::new(opts.k, opts.tol))?;
    Ok(Spectrum {
        dense,
        dim,
        rows: merge_extremes(dim, &low, &high),
    })
}

/// Sampled spectrum of `A` on `H_0`, written as `spectrum.csv`.
pub fn cmd_spectrum(
    ws: &WeightSystem,
    n: usize,
    seed: u64,
    opts: &SpectrumOptions,
    out: &Path,
) -> Result<Spectrum, CliError> {
    let pf = sample_family(ws, n, sample_seed(seed, n, 0))?;
    let op = LiftOperator::new(ws, &pf)?;
    let spec = lift_spectrum(&op, opts)?;
    write_spectrum(&spec, out)?;
    Ok(spec)
}

fn write_spectrum(spec: &Spectrum, out: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    spec.write_csv(&mut buf)
        .map_err(|e| CliError::io(&out.join("spectrum.csv"), e))?;
    write_file(out, "spectrum.csv", &buf)?;
    Ok(())
}

/// Extreme eigenvalues of `A⁽²⁾` on `H_0⁽²⁾`, written as `spectrum.csv`.
pub fn cmd_tensor(ws: &WeightSystem, n: usize, seed: u64, k: usize, tol: f64, out: &Path) -> Result<Spectrum, CliError> {
    if k == 0 {
        return Err(CliError::Validation("k must be at least 1".into()));
    }
    let pf = sample_family(ws, n, sample_seed(seed, n, 0))?;
    let op = lift::build_tensor(ws, &pf)?;
    let dim = ws.r * (n * n - 2);
    let (low, high) = lift::extreme_eigs_h0_tensor(&op, &LanczosOptions::new(k, tol))?;
    let spec = Spectrum {
        dense: false,
        dim,
        rows: merge_extremes(dim, &low, &high),
    };
    write_spectrum(&spec, out)?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleCount {
    pub length: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangleReport {
    pub n: usize,
    pub d: usize,
    pub ell: usize,
    pub sample_seed: u64,
    pub tangle_free: bool,
    pub cycles: Vec<CycleCount>,
}

/// Tangle status of a sampled `G^σ` and its cycle counts up to length
/// `min(2ℓ, 12)`, written as `tangle.json`.
pub fn cmd_tangle(ws: &WeightSystem, n: usize, seed: u64, ell: Option<usize>, out: &Path) -> Result<TangleReport, CliError> {
    let sseed = sample_seed(seed, n, 0);
    let pf = sample_family(ws, n, sseed)?;
    let ell = ell.unwrap_or_else(|| default_tangle_ell(n, ws.d));
    let g = graphs::build_colored_graph(&pf);
    let tangle_free = graphs::is_tangle_free(&g, ell)?;
    let cycles = (1..=(2 * ell).min(MAX_CYCLE_LENGTH))
        .map(|length| {
            Ok(CycleCount {
                length,
                count: graphs::count_cycles(&g, length)?,
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    let report = TangleReport {
        n,
        d: ws.d,
        ell,
        sample_seed: sseed,
        tangle_free,
        cycles,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("tangle report serializes");
    json.push('\n');
    write_file(out, "tangle.json", json.as_bytes())?;
    Ok(report)
}

/// `K_0` radius estimate of the non-backtracking operator of a sample.
pub(crate) fn sample_radius_k0(ws: &WeightSystem, pf: &PermutationFamily, trials: usize, seed: u64) -> Result<(f64, usize), CliError> {
    let b = build_b(ws, pf)?;
    let ell = nonbacktracking::default_power(pf.n);
    Ok((nonbacktracking::radius_k0(&b, ell, trials, seed), ell))
}

pub(crate) fn set_json(s: &SpectralSet) -> SpectralSetJson {
    SpectralSetJson::from(s)
}

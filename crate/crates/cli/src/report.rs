//! The combined experiment: one limit scan against many sampled lifts.

use std::path::{Path, PathBuf};

use liftspec_core::freelimit;
use liftspec_core::graphs;
use liftspec_core::lift::LiftOperator;
use liftspec_core::rng::PRNG_NAME;
use liftspec_core::spectral_set::{directed_hausdorff, hausdorff, SpectralSet, SpectralSetJson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{
    check_positive, default_tangle_ell, lift_spectrum, sample_family, sample_radius_k0, sample_seed, scan_options,
    set_json, write_file, write_limit_outputs, CliError, SpectrumOptions, WsSource,
};

pub const REPORT_VERSION: &str = "liftspec-report-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest acceptable Hausdorff distance (and upper-inclusion excess).
    pub hausdorff: f64,
    /// Fraction of samples per size that must meet `hausdorff`.
    pub pass_fraction: f64,
    /// Allowed shortfall of `s(A|H_0)` below `s(A★)`.
    pub alon_boppana: f64,
    /// Smallest `n` at which the shortfall check applies.
    pub alon_boppana_min_n: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            hausdorff: 0.15,
            pass_fraction: 0.9,
            alon_boppana: 0.15,
            alon_boppana_min_n: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ws: WsSource,
    pub n: Vec<usize>,
    /// Base seed; sample `k` at size `n` uses `sample_seed(seed, n, k)`.
    pub seed: u64,
    /// Sample streams per size.
    pub streams: Vec<u64>,
    /// Tangle radius; `None` uses `⌊ln n / (4 ln(d-1))⌋` per size.
    pub tangle_ell: Option<usize>,
    pub grid_step: f64,
    pub refine_tol: f64,
    pub dense_max: usize,
    pub radius_trials: usize,
    pub thresholds: Thresholds,
    /// Not part of the report: the same experiment written elsewhere stays byte-identical.
    #[serde(skip)]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(ws: WsSource, n: Vec<usize>, seed: u64, samples: usize, out: PathBuf) -> Self {
        Self {
            ws,
            n,
            seed,
            streams: (0..samples as u64).collect(),
            tangle_ell: None,
            grid_step: 1e-2,
            refine_tol: 1e-4,
            dense_max: SpectrumOptions::default().dense_max,
            radius_trials: 4,
            thresholds: Thresholds::default(),
            out,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n.is_empty() || self.streams.is_empty() {
            return Err(CliError::Validation("need at least one n and one sample".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 2) {
            return Err(CliError::Validation(format!("n = {n} must be at least 2")));
        }
        if self.tangle_ell == Some(0) {
            return Err(CliError::Validation("tangle radius must be at least 1".into()));
        }
        if self.radius_trials == 0 {
            return Err(CliError::Validation("radius trials must be at least 1".into()));
        }
        check_positive("grid step", self.grid_step)?;
        check_positive("refine tolerance", self.refine_tol)?;
        check_positive("hausdorff threshold", self.thresholds.hausdorff)?;
        check_positive("alon-boppana threshold", self.thresholds.alon_boppana)?;
        if !(0.0..=1.0).contains(&self.thresholds.pass_fraction) {
            return Err(CliError::Validation("pass fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub n: usize,
    pub stream: u64,
    pub sample_seed: u64,
    /// `true` when every eigenvalue on `H_0` was computed.
    pub dense: bool,
    /// Computed eigenvalues on `H_0` (all of them, or the extremes).
    pub spectrum: SpectralSetJson,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spectral_radius: f64,
    /// `None` on the Lanczos path, where the interior is not computed.
    pub hausdorff: Option<f64>,
    /// Largest distance from a computed eigenvalue to the limit set.
    pub upper_excess: f64,
    pub tangle_ell: usize,
    pub tangle_free: bool,
    pub radius_k0: f64,
    pub radius_power: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median_hausdorff: Option<f64>,
    pub within_threshold: usize,
    pub samples: usize,
    pub tangle_free: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub prng: String,
    pub config: ExperimentConfig,
    pub limit: SpectralSetJson,
    /// Grid points classified by the density fallback during the scan.
    pub limit_fallbacks: usize,
    pub rho_b_star: f64,
    /// Spectral radius of `A★`, read off the limit set.
    pub s_a_star: f64,
    pub samples: Vec<SampleReport>,
    pub sizes: Vec<SizeSummary>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn run_sample(
    cfg: &ExperimentConfig,
    ws: &liftspec_core::model::WeightSystem,
    limit: &SpectralSet,
    n: usize,
    stream: u64,
) -> Result<SampleReport, CliError> {
    let sseed = sample_seed(cfg.seed, n, stream);
    let pf = sample_family(ws, n, sseed)?;
    let op = LiftOperator::new(ws, &pf)?;
    let opts = SpectrumOptions {
        dense_max: cfg.dense_max,
        residuals: false,
        ..SpectrumOptions::default()
    };
    let spec = lift_spectrum(&op, &opts)?;
    let set = spec.set();
    let upper_excess = directed_hausdorff(&set, limit).map_err(|_| CliError::Validation("empty spectrum".into()))?;
    let hd = if spec.dense {
        Some(hausdorff(&set, limit).map_err(|_| CliError::Validation("empty spectrum".into()))?)
    } else {
        None
    };
    let ell = cfg.tangle_ell.unwrap_or_else(|| default_tangle_ell(n, ws.d));
    let tangle_free = graphs::is_tangle_free(&graphs::build_colored_graph(&pf), ell)?;
    let (radius_k0, radius_power) = sample_radius_k0(ws, &pf, cfg.radius_trials, sseed)?;
    Ok(SampleReport {
        n,
        stream,
        sample_seed: sseed,
        dense: spec.dense,
        spectrum: set_json(&set),
        lambda_min: spec.min(),
        lambda_max: spec.max(),
        spectral_radius: spec.radius(),
        hausdorff: hd,
        upper_excess,
        tangle_ell: ell,
        tangle_free,
        radius_k0,
        radius_power,
    })
}

fn checks(cfg: &ExperimentConfig, s_a_star: f64, samples: &[SampleReport], sizes: &[SizeSummary]) -> Vec<CheckResult> {
    let t = &cfg.thresholds;
    let mut out = Vec::new();
    for size in sizes.iter().filter(|s| s.median_hausdorff.is_some()) {
        let need = (t.pass_fraction * size.samples as f64).ceil() as usize;
        out.push(CheckResult {
            name: format!("hausdorff_n{}", size.n),
            passed: size.within_threshold >= need,
            detail: format!("{}/{} samples within {}", size.within_threshold, size.samples, t.hausdorff),
        });
    }
    let excess = samples.iter().map(|s| s.upper_excess).fold(0.0, f64::max);
    out.push(CheckResult {
        name: "upper_inclusion".into(),
        passed: excess <= t.hausdorff,
        detail: format!("largest distance to the limit set {excess:.6}"),
    });
    let floor = s_a_star - t.alon_boppana;
    let eligible: Vec<&SampleReport> = samples.iter().filter(|s| s.n >= t.alon_boppana_min_n).collect();
    if !eligible.is_empty() {
        let low = eligible.iter().filter(|s| s.spectral_radius < floor).count();
        out.push(CheckResult {
            name: "alon_boppana".into(),
            passed: low == 0,
            detail: format!("{low}/{} samples below {floor:.6}", eligible.len()),
        });
    }
    let medians: Vec<(usize, f64)> = sizes.iter().filter_map(|s| s.median_hausdorff.map(|m| (s.n, m))).collect();
    if medians.len() >= 2 {
        let mut sorted = medians.clone();
        sorted.sort_by_key(|&(n, _)| n);
        let ok = sorted.windows(2).all(|w| w[1].1 <= w[0].1);
        out.push(CheckResult {
            name: "median_hausdorff_trend".into(),
            passed: ok,
            detail: sorted
                .iter()
                .map(|(n, m)| format!("n={n}: {m:.6}"))
                .collect::<Vec<_>>()
                .join(", "),
        });
    }
    out
}

/// Runs the experiment and writes `report.json`, `limit.json` and `diag.csv`.
///
/// Samples run in parallel; the report lists them ordered by `n`, then stream.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let ws = cfg.ws.load()?;
    let scan = freelimit::limit_spectrum_scan(&ws, &scan_options(cfg.grid_step, cfg.refine_tol)?)?;
    let limit = scan.set.clone();
    if limit.is_empty() {
        return Err(CliError::NonConvergence("limit scan found no spectrum".into()));
    }
    let s_a_star = limit.min().unwrap_or(0.0).abs().max(limit.max().unwrap_or(0.0).abs());
    let rho_b_star = freelimit::rho_b_star(&ws)?;

    let jobs: Vec<(usize, u64)> = cfg
        .n
        .iter()
        .flat_map(|&n| cfg.streams.iter().map(move |&s| (n, s)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(n, s)| run_sample(cfg, &ws, &limit, n, s))
        .collect::<Result<Vec<_>, _>>()?;

    let sizes: Vec<SizeSummary> = cfg
        .n
        .iter()
        .map(|&n| {
            let of_n: Vec<&SampleReport> = samples.iter().filter(|s| s.n == n).collect();
            let hds: Vec<f64> = of_n.iter().filter_map(|s| s.hausdorff).collect();
            SizeSummary {
                n,
                within_threshold: hds.iter().filter(|&&h| h <= cfg.thresholds.hausdorff).count(),
                median_hausdorff: median(hds),
                samples: of_n.len(),
                tangle_free: of_n.iter().filter(|s| s.tangle_free).count(),
            }
        })
        .collect();
    let checks = checks(cfg, s_a_star, &samples, &sizes);
    let report = ExperimentReport {
        version: REPORT_VERSION.into(),
        prng: PRNG_NAME.into(),
        config: cfg.clone(),
        limit: set_json(&limit),
        limit_fallbacks: scan.fallbacks,
        rho_b_star,
        s_a_star,
        passed: checks.iter().all(|c| c.passed),
        samples,
        sizes,
        checks,
    };
    write_limit_outputs(&scan, &cfg.out)?;
    write_report(&report, &cfg.out)?;
    Ok(report)
}

fn write_report(report: &ExperimentReport, out: &Path) -> Result<(), CliError> {
    write_file(out, "report.json", report.to_json().as_bytes())?;
    Ok(())
}

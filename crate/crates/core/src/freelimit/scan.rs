//! Spectrum membership for `A★`, grid scans with edge refinement, and the
//! spectral edge `s(A★)`.
//!
//! A point `μ` is in `σ(A★)` when `ρ((B★)_μ) = ρ(L_μ)^{1/2}` reaches `1`
//! (up to `rho_tol`), with `L_μ` built from `â_i(μ) = a_i γ_i(μ + iη)`. Atoms
//! are recognised by their mass `η |Im tr G_oo| / r`, and atoms between
//! grid points by the jump of `Re tr G_oo`, which is decreasing across any
//! gap of the spectrum.

use num_complex::Complex64;
use rayon::prelude::*;

use super::cpmap::{build_l, cp_radius_from};
use super::resolvent::{refine_resolvent, solve_resolvent, ResolventOptions, ResolventState};
use super::FreeLimitError;
use crate::model::WeightSystem;
use crate::spectral_set::SpectralSet;
use crate::CMatrix;

#[derive(Debug, Clone)]
pub struct MembershipOptions {
    pub resolvent: ResolventOptions,
    pub rho_tol: f64,
    /// Minimum `η |Im tr G_oo| / r` for an atom.
    pub atom_mass: f64,
    /// Density threshold `|Im tr G_oo| / r` used when the solve only reached a larger `η`.
    pub density_fallback: f64,
    pub cp_tol: f64,
    pub cp_max_iter: usize,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        Self {
            resolvent: ResolventOptions::default(),
            rho_tol: 1e-3,
            atom_mass: 1e-3,
            density_fallback: 1e-2,
            cp_tol: 1e-10,
            cp_max_iter: 20_000,
        }
    }
}

/// Outcome of the membership test at one point, with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub mu: f64,
    pub member: bool,
    /// `ρ((B★)_μ) = ρ(L_μ)^{1/2}`.
    pub rho: f64,
    pub im_trace: f64,
    pub re_trace: f64,
    pub eta: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Passed the atom-mass test.
    pub atom: bool,
    /// The resolvent did not converge at the final `η`; classified by density at a larger `η`.
    pub fallback: bool,
}

fn classify(
    ws: &WeightSystem,
    mu: f64,
    state: &ResolventState,
    opts: &MembershipOptions,
    cp_start: Option<&[CMatrix]>,
    fallback: bool,
) -> (Membership, Vec<CMatrix>) {
    let l = build_l(&state.a_hats, &ws.star);
    let start = match cp_start {
        Some(x) => {
            // keep the warm start positive definite
            let scale = x.iter().map(|m| m.norm()).fold(0.0, f64::max).max(1e-300);
            x.iter()
                .map(|m| m + CMatrix::identity(ws.r, ws.r) * Complex64::new(1e-3 * scale, 0.0))
                .collect()
        }
        None => l.identity(),
    };
    let cp = cp_radius_from(&l, &start, opts.cp_tol, opts.cp_max_iter);
    let rho = cp.rho.sqrt();
    let r = ws.r as f64;
    let mass = state.eta() * (-state.im_trace()) / r;
    let by_rho = rho >= 1.0 - opts.rho_tol;
    let by_atom = mass >= opts.atom_mass;
    let member = if fallback {
        -state.im_trace() / r >= opts.density_fallback
    } else {
        by_rho || by_atom
    };
    (
        Membership {
            mu,
            member,
            rho,
            im_trace: state.im_trace(),
            re_trace: state.re_trace(),
            eta: state.eta(),
            iterations: state.iterations,
            residual: state.residual,
            atom: by_atom && !fallback,
            fallback,
        },
        cp.eigenvector,
    )
}

/// Full membership test at `μ` (fresh `η`-continuation).
pub fn membership(ws: &WeightSystem, mu: f64, opts: &MembershipOptions) -> Result<Membership, FreeLimitError> {
    if !ws.symmetric {
        return Err(FreeLimitError::NotSymmetric);
    }
    Ok(full_point(ws, mu, opts)?.0)
}

fn full_point(
    ws: &WeightSystem,
    mu: f64,
    opts: &MembershipOptions,
) -> Result<(Membership, Option<ResolventState>, Vec<CMatrix>), FreeLimitError> {
    match solve_resolvent(ws, Complex64::new(mu, 0.0), &opts.resolvent) {
        Ok(s) => {
            let (m, x) = classify(ws, mu, &s, opts, None, false);
            Ok((m, Some(s), x))
        }
        Err(FreeLimitError::NoConvergence { last: Some(s), .. }) => {
            let (m, x) = classify(ws, mu, &s, opts, None, true);
            Ok((m, None, x))
        }
        Err(e) => Err(e),
    }
}

/// `μ ∈ σ(A★)` test with the given final `η` and threshold; diagnostics always returned.
pub fn is_in_limit_spectrum(
    ws: &WeightSystem,
    mu: f64,
    eta_final: f64,
    rho_tol: f64,
) -> Result<Membership, FreeLimitError> {
    let mut opts = MembershipOptions {
        rho_tol,
        ..Default::default()
    };
    opts.resolvent.eta_final = eta_final;
    membership(ws, mu, &opts)
}

/// Membership along consecutive points, each warm-started from its
/// predecessor and falling back to full continuation when the warm solve
/// fails or lands on a non-physical branch.
fn sweep(ws: &WeightSystem, mus: &[f64], opts: &MembershipOptions) -> Result<Vec<Membership>, FreeLimitError> {
    let mut out = Vec::with_capacity(mus.len());
    let mut prev: Option<ResolventState> = None;
    let mut before: Option<Vec<CMatrix>> = None;
    let mut cp_prev: Option<Vec<CMatrix>> = None;
    let eta = opts.resolvent.eta_final;
    for &mu in mus {
        let z = Complex64::new(mu, eta);
        let warm = prev
            .as_ref()
            .and_then(|p| {
                // linear extrapolation from the last two points, then the last point alone
                let predicted = before.as_ref().and_then(|b| {
                    let guess: Vec<CMatrix> = p
                        .gammas
                        .iter()
                        .zip(b)
                        .map(|(x, y)| x * Complex64::new(2.0, 0.0) - y)
                        .collect();
                    refine_resolvent(ws, z, &guess, &opts.resolvent)
                });
                predicted.or_else(|| refine_resolvent(ws, z, &p.gammas, &opts.resolvent))
            })
            .map(|s| {
                let (m, x) = classify(ws, mu, &s, opts, cp_prev.as_deref(), false);
                (m, s, x)
            })
            // away from atoms the physical branch never has ρ((B★)_μ) above 1
            .filter(|(m, _, _)| m.atom || m.rho <= 1.0 + opts.rho_tol);
        let (m, s, x) = match warm {
            Some((m, s, x)) => (m, Some(s), x),
            None => full_point(ws, mu, opts)?,
        };
        out.push(m);
        before = prev.take().map(|p| p.gammas);
        prev = s;
        cp_prev = Some(x);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Scanned interval; defaults to `±(Σ|a_i| + |a_0| + grid_step)`.
    pub range: Option<(f64, f64)>,
    pub grid_step: f64,
    pub refine_tol: f64,
    pub membership: MembershipOptions,
    /// Grid points per warm-started sweep; sweeps run in parallel.
    pub chunk: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            range: None,
            grid_step: 1e-2,
            refine_tol: 1e-4,
            membership: MembershipOptions::default(),
            chunk: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub set: SpectralSet,
    /// One row per grid point, ascending in `μ`.
    pub rows: Vec<Membership>,
    /// Points classified by the density fallback (including refinement probes).
    pub fallbacks: usize,
}

fn bisect_edge(
    ws: &WeightSystem,
    mut outside: f64,
    mut inside: f64,
    tol: f64,
    opts: &MembershipOptions,
) -> Result<(f64, usize), FreeLimitError> {
    let mut fallbacks = 0;
    while (inside - outside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        let m = full_point(ws, mid, opts)?.0;
        fallbacks += m.fallback as usize;
        if m.member {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok((0.5 * (inside + outside), fallbacks))
}

fn re_trace_at(ws: &WeightSystem, mu: f64, opts: &ResolventOptions) -> Result<f64, FreeLimitError> {
    Ok(solve_resolvent(ws, Complex64::new(mu, 0.0), opts)?.re_trace())
}

/// Locates a pole of `Re tr G_oo` in `[lo, hi]`, where it is known that
/// one lies, and confirms it carries mass. Left of the pole the function
/// stays below its value at `lo`; right of it, within a grid step, it is
/// far above.
fn locate_atom(
    ws: &WeightSystem,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    opts: &MembershipOptions,
) -> Result<Option<f64>, FreeLimitError> {
    let mut f_lo = re_trace_at(ws, lo, &opts.resolvent)?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = re_trace_at(ws, mid, &opts.resolvent)?;
        if f_mid > f_lo {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let probe = ResolventOptions {
        eta_final: 2.0 * tol,
        ..opts.resolvent.clone()
    };
    let s = solve_resolvent(ws, Complex64::new(p, 0.0), &probe)?;
    let mass = s.eta() * (-s.im_trace()) / ws.r as f64;
    Ok((mass >= opts.atom_mass).then_some(p))
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k0 = (lo / step).ceil() as i64;
    let k1 = (hi / step).floor() as i64;
    (k0..=k1).map(|k| k as f64 * step).collect()
}

enum Task {
    Edge { outside: f64, inside: f64 },
    Atom { lo: f64, hi: f64 },
}

/// Grid scan of the membership test, merged into intervals and isolated points.
pub fn limit_spectrum_scan(ws: &WeightSystem, opts: &ScanOptions) -> Result<ScanResult, FreeLimitError> {
    if !ws.symmetric {
        return Err(FreeLimitError::NotSymmetric);
    }
    let step = opts.grid_step;
    let (lo, hi) = opts.range.unwrap_or_else(|| {
        let b = ws.norm_bound() + step;
        (-b, b)
    });
    let mus = grid(lo, hi, step);
    let chunks: Vec<Vec<Membership>> = mus
        .par_chunks(opts.chunk.max(1))
        .map(|c| sweep(ws, c, &opts.membership))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Membership> = chunks.concat();
    let mut fallbacks = rows.iter().filter(|m| m.fallback).count();

    // maximal runs of members
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut k = 0;
    while k < rows.len() {
        if rows[k].member {
            let a = k;
            while k + 1 < rows.len() && rows[k + 1].member {
                k += 1;
            }
            runs.push((a, k));
        }
        k += 1;
    }

    let mut tasks: Vec<Task> = Vec::new();
    let mut run_shape: Vec<(usize, usize, bool)> = Vec::new();
    for &(a, b) in &runs {
        let atom_only = rows[a..=b].iter().all(|m| m.atom);
        run_shape.push((a, b, atom_only));
        if atom_only {
            let lo = if a > 0 { rows[a - 1].mu } else { rows[a].mu };
            let hi = if b + 1 < rows.len() { rows[b + 1].mu } else { rows[b].mu };
            tasks.push(Task::Atom { lo, hi });
        } else {
            if a > 0 {
                tasks.push(Task::Edge {
                    outside: rows[a - 1].mu,
                    inside: rows[a].mu,
                });
            }
            if b + 1 < rows.len() {
                tasks.push(Task::Edge {
                    outside: rows[b + 1].mu,
                    inside: rows[b].mu,
                });
            }
        }
    }
    // atoms strictly between two non-member grid points
    let mut gap_atoms = 0;
    for k in 0..rows.len().saturating_sub(1) {
        let (u, v) = (&rows[k], &rows[k + 1]);
        if !u.member && !v.member && !u.fallback && !v.fallback && v.re_trace > u.re_trace {
            tasks.push(Task::Atom { lo: u.mu, hi: v.mu });
            gap_atoms += 1;
        }
    }
    let tol = opts.refine_tol;
    let results: Vec<(Option<f64>, usize)> = tasks
        .par_iter()
        .map(|t| match *t {
            Task::Edge { outside, inside } => bisect_edge(ws, outside, inside, tol, &opts.membership)
                .map(|(x, f)| (Some(x), f)),
            Task::Atom { lo, hi } if lo < hi => {
                locate_atom(ws, lo, hi, tol, &opts.membership).map(|p| (p, 0))
            }
            Task::Atom { lo, .. } => Ok((Some(lo), 0)),
        })
        .collect::<Result<_, _>>()?;
    fallbacks += results.iter().map(|r| r.1).sum::<usize>();

    let mut intervals = Vec::new();
    let mut points = Vec::new();
    let mut it = results.iter().map(|r| r.0);
    for &(a, b, atom_only) in &run_shape {
        if atom_only {
            // a run found by mass alone is an atom even if the bisection could not confirm it
            let best = rows[a..=b]
                .iter()
                .max_by(|x, y| (-x.im_trace).total_cmp(&-y.im_trace))
                .expect("nonempty run");
            // keep a grid point that sits on the atom more exactly than the bisection
            let point = match it.next().flatten() {
                Some(p) => {
                    let at_p = solve_resolvent(ws, Complex64::new(p, 0.0), &opts.membership.resolvent)?;
                    if -at_p.im_trace() > -best.im_trace {
                        p
                    } else {
                        best.mu
                    }
                }
                None => best.mu,
            };
            points.push(point);
            continue;
        }
        let left = if a > 0 { it.next().flatten().unwrap_or(rows[a].mu) } else { rows[a].mu };
        let right = if b + 1 < rows.len() {
            it.next().flatten().unwrap_or(rows[b].mu)
        } else {
            rows[b].mu
        };
        if b - a <= 1 && right - left <= 4.0 * tol {
            points.push(0.5 * (left + right));
        } else {
            intervals.push((left, right));
        }
    }
    for _ in 0..gap_atoms {
        if let Some(p) = it.next().flatten() {
            points.push(p);
        }
    }
    Ok(ScanResult {
        set: SpectralSet::union(intervals, points),
        rows,
        fallbacks,
    })
}

/// `s(A★) = max σ(A★)`: descends from the norm bound to the first member
/// (or atom) and bisects the membership predicate down to `tol`.
pub fn spectral_edge(ws: &WeightSystem, tol: f64) -> Result<f64, FreeLimitError> {
    spectral_edge_with(ws, tol, &ScanOptions::default())
}

pub fn spectral_edge_with(ws: &WeightSystem, tol: f64, opts: &ScanOptions) -> Result<f64, FreeLimitError> {
    if !ws.symmetric {
        return Err(FreeLimitError::NotSymmetric);
    }
    let step = opts.grid_step;
    let b = ws.norm_bound() + step;
    let mut mus = grid(-b, b, step);
    mus.reverse();
    let mopts = &opts.membership;
    let eta = mopts.resolvent.eta_final;
    let mut prev: Option<(Membership, Option<ResolventState>)> = None;
    for &mu in &mus {
        let warm = prev
            .as_ref()
            .and_then(|(_, s)| s.as_ref())
            .and_then(|p| refine_resolvent(ws, Complex64::new(mu, eta), &p.gammas, &mopts.resolvent))
            .map(|s| (classify(ws, mu, &s, mopts, None, false).0, s))
            .filter(|(m, _)| m.atom || m.rho <= 1.0 + mopts.rho_tol);
        let (m, s) = match warm {
            Some((m, s)) => (m, Some(s)),
            None => {
                let (m, s, _) = full_point(ws, mu, mopts)?;
                (m, s)
            }
        };
        if let Some((p, _)) = &prev {
            if m.member {
                if m.atom {
                    return Ok(locate_atom(ws, mu - step, p.mu, tol, mopts)?.unwrap_or(mu));
                }
                return Ok(bisect_edge(ws, p.mu, mu, tol, mopts)?.0);
            }
            if !m.fallback && !p.fallback && p.re_trace > m.re_trace {
                if let Some(atom) = locate_atom(ws, mu, p.mu, tol, mopts)? {
                    return Ok(atom);
                }
            }
        } else if m.member {
            return Ok(mu);
        }
        prev = Some((m, s));
    }
    Err(FreeLimitError::EmptySpectrum)
}

/// Writes the per-point diagnostics as CSV.
pub fn write_diag_csv<W: std::io::Write>(rows: &[Membership], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mu", "rho_b_star_mu", "im_trace_g_oo", "iterations", "residual", "member"])?;
    for m in rows {
        w.write_record([
            format!("{:.6}", m.mu),
            format!("{:.12e}", m.rho),
            format!("{:.12e}", m.im_trace),
            m.iterations.to_string(),
            format!("{:.3e}", m.residual),
            (m.member as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

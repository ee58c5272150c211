//! Hermitian Lanczos with full reorthogonalization, restricted to an
//! invariant subspace through a projector.
//!
//! Ritz values of the tridiagonal matrix are found by Sturm bisection and
//! their vectors by inverse iteration, so convergence checks cost O(steps)
//! rather than a dense eigensolve. Every returned value carries an explicit
//! residual certificate computed with the operator itself.

use num_complex::Complex64;

use super::{dot, norm, random_vector, LiftError};
use crate::rng::rng_from_seed;

/// A self-adjoint operator together with the projector onto the invariant
/// subspace of interest.
pub trait SymmetricOp: Sync {
    fn dim(&self) -> usize;
    /// Dimension of the range of [`SymmetricOp::project`].
    fn subspace_dim(&self) -> usize;
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]);
    fn project(&self, v: &mut [Complex64]);
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Number of eigenvalues wanted at each end.
    pub k: usize,
    /// Residual bound `|Av - λv|` for every returned pair.
    pub tol: f64,
    /// Krylov dimension cap; `None` picks a default from `k` and the dimension.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub check_every: usize,
}

impl LanczosOptions {
    pub fn new(k: usize, tol: f64) -> Self {
        Self {
            k,
            tol,
            max_steps: None,
            seed: 0x1a2c_205e_ed00_0001,
            check_every: 10,
        }
    }

    fn step_cap(&self, dim: usize, subspace: usize) -> usize {
        let log = (dim.max(2) as f64).ln().ceil() as usize;
        self.max_steps
            .unwrap_or(200 + 60 * self.k.max(1) * log)
            .min(subspace)
    }
}

/// An eigenvalue estimate with its certified residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzPair {
    pub value: f64,
    pub residual: f64,
}

/// Symmetric tridiagonal matrix with diagonal `alpha` and off-diagonal `beta`.
struct Tridiagonal<'a> {
    alpha: &'a [f64],
    beta: &'a [f64],
}

impl Tridiagonal<'_> {
    fn len(&self) -> usize {
        self.alpha.len()
    }

    fn gershgorin(&self) -> (f64, f64) {
        let m = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let left = if i > 0 { self.beta[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < m { self.beta[i].abs() } else { 0.0 };
            lo = lo.min(self.alpha[i] - left - right);
            hi = hi.max(self.alpha[i] + left + right);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    fn count_below(&self, x: f64, tiny: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.len() {
            let off = if i > 0 { self.beta[i - 1] * self.beta[i - 1] / d } else { 0.0 };
            d = self.alpha[i] - x - off;
            if d.abs() < tiny {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `idx`-th smallest eigenvalue (0-based).
    fn eigenvalue(&self, idx: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        let tiny = f64::EPSILON * scale * 1e-3;
        lo -= f64::EPSILON * scale;
        hi += f64::EPSILON * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid, tiny) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an (accurate) eigenvalue `theta`, by two steps
    /// of inverse iteration with a partially pivoted tridiagonal solve.
    fn eigenvector(&self, theta: f64) -> Vec<f64> {
        let m = self.len();
        if m == 1 {
            return vec![1.0];
        }
        let (lo, hi) = self.gershgorin();
        let floor = f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        // LU of T - theta I with row interchanges (LAPACK gttrf layout)
        let mut dl: Vec<f64> = self.beta[..m - 1].to_vec();
        let mut dd: Vec<f64> = self.alpha.iter().map(|a| a - theta).collect();
        let mut du: Vec<f64> = self.beta[..m - 1].to_vec();
        let mut du2 = vec![0.0; m.saturating_sub(2)];
        let mut swapped = vec![false; m - 1];
        for i in 0..m - 1 {
            if dd[i].abs() >= dl[i].abs() {
                if dd[i] == 0.0 {
                    dd[i] = floor;
                }
                let f = dl[i] / dd[i];
                dl[i] = f;
                dd[i + 1] -= f * du[i];
            } else {
                let f = dd[i] / dl[i];
                dd[i] = dl[i];
                dl[i] = f;
                let t = du[i];
                du[i] = dd[i + 1];
                dd[i + 1] = t - f * dd[i + 1];
                if i + 2 < m {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for d in dd.iter_mut() {
            if d.abs() < floor {
                *d = if *d < 0.0 { -floor } else { floor };
            }
        }
        let solve = |b: &mut [f64]| {
            for i in 0..m - 1 {
                if swapped[i] {
                    b.swap(i, i + 1);
                }
                b[i + 1] -= dl[i] * b[i];
            }
            b[m - 1] /= dd[m - 1];
            b[m - 2] = (b[m - 2] - du[m - 2] * b[m - 1]) / dd[m - 2];
            for i in (0..m.saturating_sub(2)).rev() {
                b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / dd[i];
            }
        };
        // deterministic, generic start vector
        let mut s: Vec<f64> = (0..m).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
        for _ in 0..3 {
            solve(&mut s);
            let nrm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !nrm.is_finite() || nrm == 0.0 {
                break;
            }
            s.iter_mut().for_each(|x| *x /= nrm);
        }
        s
    }
}

/// Wanted Ritz indices: the `k` smallest followed by the `k` largest (deduplicated).
fn wanted(m: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
    let k = k.min(m);
    let low: Vec<usize> = (0..k).collect();
    let high: Vec<usize> = (0..k).map(|j| m - 1 - j).collect();
    (low, high)
}

fn ritz_vector(basis: &[Vec<Complex64>], s: &[f64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); basis[0].len()];
    for (v, &c) in basis.iter().zip(s) {
        for (yi, vi) in y.iter_mut().zip(v) {
            *yi += vi * c;
        }
    }
    y
}

fn explicit_residual<O: SymmetricOp>(op: &O, y: &mut [Complex64], theta: f64) -> f64 {
    op.project(y);
    let ny = norm(y);
    let mut ay = vec![Complex64::new(0.0, 0.0); y.len()];
    op.apply(y, &mut ay);
    let r: Vec<Complex64> = ay.iter().zip(y.iter()).map(|(a, b)| a - b * theta).collect();
    norm(&r) / ny
}

/// The `k` smallest (ascending) and `k` largest (descending) eigenvalues of
/// `op` on its subspace, each with `|Av - λv| <= tol`.
pub fn lanczos_extremes<O: SymmetricOp>(
    op: &O,
    opts: &LanczosOptions,
) -> Result<(Vec<RitzPair>, Vec<RitzPair>), LiftError> {
    let m = op.subspace_dim();
    if m == 0 || opts.k == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let cap = opts.step_cap(op.dim(), m);
    let mut rng = rng_from_seed(opts.seed);
    let mut q = random_vector(op.dim(), &mut rng);
    op.project(&mut q);
    let nq = norm(&q);
    q.iter_mut().for_each(|z| *z /= nq);

    let mut basis: Vec<Vec<Complex64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![Complex64::new(0.0, 0.0); op.dim()];
    let mut scale = 0.0f64;
    let mut worst = f64::INFINITY;

    for j in 0..cap {
        op.apply(&basis[j], &mut w);
        op.project(&mut w);
        let a = dot(&basis[j], &w).re;
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= vi * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= vi * b;
            }
        }
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= vi * c;
                }
            }
        }
        let b = norm(&w);
        alpha.push(a);
        scale = scale.max(a.abs() + b);
        let steps = j + 1;
        let exhausted = steps == m || b <= 1e-13 * scale.max(f64::MIN_POSITIVE);
        if exhausted || steps % opts.check_every == 0 || steps == cap {
            let t = Tridiagonal {
                alpha: &alpha,
                beta: &beta,
            };
            let (low, high) = wanted(steps, opts.k);
            let ritz = |idx: &usize| {
                let theta = t.eigenvalue(*idx);
                let s = t.eigenvector(theta);
                let estimate = if exhausted { 0.0 } else { b * s[steps - 1].abs() };
                (theta, s, estimate)
            };
            let lows: Vec<_> = low.iter().map(ritz).collect();
            let highs: Vec<_> = high.iter().map(ritz).collect();
            let est = lows.iter().chain(&highs).map(|x| x.2).fold(0.0, f64::max);
            if est <= 0.5 * opts.tol || exhausted {
                let certify = |list: Vec<(f64, Vec<f64>, f64)>| -> Vec<RitzPair> {
                    list.into_iter()
                        .map(|(theta, s, _)| {
                            let mut y = ritz_vector(&basis, &s);
                            RitzPair {
                                value: theta,
                                residual: explicit_residual(op, &mut y, theta),
                            }
                        })
                        .collect()
                };
                let lo_pairs = certify(lows);
                let hi_pairs = certify(highs);
                worst = lo_pairs
                    .iter()
                    .chain(&hi_pairs)
                    .map(|p| p.residual)
                    .fold(0.0, f64::max);
                if worst <= opts.tol {
                    return Ok((lo_pairs, hi_pairs));
                }
            } else {
                worst = est;
            }
        }
        if exhausted {
            return Err(LiftError::NoConvergence {
                iterations: steps,
                residual: worst,
            });
        }
        beta.push(b);
        w.iter_mut().for_each(|z| *z /= b);
        basis.push(std::mem::replace(&mut w, vec![Complex64::new(0.0, 0.0); op.dim()]));
    }
    Err(LiftError::NoConvergence {
        iterations: cap,
        residual: worst,
    })
}

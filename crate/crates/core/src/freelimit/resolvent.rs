//! Tree resolvent fixed point
//! `γ_i = (z - a_0 - Σ_{j≠i★} a_j γ_j a_{j★})^{-1}`,
//! solved by continuation in `η = Im z` with a damped iteration and a
//! structured Newton corrector.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FreeLimitError;
use crate::model::WeightSystem;
use crate::numerics::{frobenius, hermitian_eigenvalues, inv};
use crate::CMatrix;

/// Solution of the tree recursion at one point `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventState {
    pub z: Complex64,
    pub gammas: Vec<CMatrix>,
    pub g_oo: CMatrix,
    /// `â_i = a_i γ_i`.
    pub a_hats: Vec<CMatrix>,
    pub residual: f64,
    pub iterations: usize,
}

impl ResolventState {
    pub fn eta(&self) -> f64 {
        self.z.im
    }

    /// `Im tr G_oo`.
    pub fn im_trace(&self) -> f64 {
        self.g_oo.trace().im
    }

    pub fn re_trace(&self) -> f64 {
        self.g_oo.trace().re
    }
}

#[derive(Debug, Clone)]
pub struct ResolventOptions {
    pub eta_start: f64,
    pub eta_final: f64,
    pub eta_ratio: f64,
    /// Initial damping `α` of `γ ← (1-α)γ + αF(γ)`; halved whenever the residual grows.
    pub damping: f64,
    pub tol: f64,
    /// Iteration budget per `η` level.
    pub max_iter: usize,
    /// Use the Newton corrector (falls back to damped steps when a Newton step fails).
    pub newton: bool,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            eta_start: 1.0,
            eta_final: 1e-5,
            eta_ratio: 0.5,
            damping: 0.5,
            tol: 1e-10,
            max_iter: 20_000,
            newton: true,
        }
    }
}

impl ResolventOptions {
    /// Geometric `η` schedule from `eta_start` down to (and ending at) `eta_final`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut eta = self.eta_start;
        // below 1e-7 the last level jumps straight to `eta_final`
        while eta > self.eta_final.max(1e-7) && out.len() < 200 {
            out.push(eta);
            eta *= self.eta_ratio;
        }
        out.push(self.eta_final);
        out
    }
}

/// Largest allowed violation of `-Im γ ⪰ 0`.
pub const HERGLOTZ_TOL: f64 = 1e-9;

fn scaled(m: &CMatrix, c: Complex64) -> CMatrix {
    m * c
}

/// `-Im M = i (M - M*) / 2`, Hermitian.
fn minus_im(m: &CMatrix) -> CMatrix {
    scaled(&(m - m.adjoint()), Complex64::new(0.0, 0.5))
}

/// Smallest eigenvalue of `-Im M`.
pub fn herglotz_margin(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(&minus_im(m))
        .ok()
        .and_then(|v| v.first().copied())
        .unwrap_or(f64::NEG_INFINITY)
}

pub(crate) struct Recursion<'a> {
    ws: &'a WeightSystem,
    z: Complex64,
    adj: Vec<CMatrix>,
}

impl<'a> Recursion<'a> {
    pub(crate) fn new(ws: &'a WeightSystem, z: Complex64) -> Self {
        // a_{i★} is used as given, so non-symmetric systems work too
        let adj = (0..ws.d).map(|i| ws.weights[ws.star[i]].clone()).collect();
        Self { ws, z, adj }
    }

    fn shifted(&self) -> CMatrix {
        let r = self.ws.r;
        CMatrix::identity(r, r) * self.z - &self.ws.a0
    }

    /// `Σ_j a_j γ_j a_{j★}`.
    fn sigma(&self, g: &[CMatrix]) -> CMatrix {
        let r = self.ws.r;
        let mut s = CMatrix::zeros(r, r);
        for (j, gj) in g.iter().enumerate() {
            s += &self.ws.weights[j] * gj * &self.adj[j];
        }
        s
    }

    /// `F(γ)`; `None` when one of the inverses is singular.
    pub(crate) fn map(&self, g: &[CMatrix]) -> Option<Vec<CMatrix>> {
        let base = self.shifted() - self.sigma(g);
        (0..self.ws.d)
            .map(|i| {
                let s = self.ws.star[i];
                let m = &base + &self.adj[i] * &g[s] * &self.ws.weights[i];
                inv(&m).ok()
            })
            .collect()
    }

    pub(crate) fn g_oo(&self, g: &[CMatrix]) -> Option<CMatrix> {
        inv(&(self.shifted() - self.sigma(g))).ok()
    }

    fn residual(g: &[CMatrix], f: &[CMatrix]) -> f64 {
        g.iter().zip(f).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Newton direction for `R(γ) = γ - F(γ) = 0`.
    ///
    /// Writing `W = Σ_j a_j δ_j a_{j★}`, the linearised equations decouple
    /// into `δ_i + F_i a_{i★} δ_{i★} a_i F_i = F_i W F_i - R_i`, one small
    /// system per orbit `{i, i★}`. Each is solved as an affine function of
    /// `W`, which leaves a single `r² x r²` system for `W`.
    fn newton_direction(&self, g: &[CMatrix], f: &[CMatrix]) -> Option<Vec<CMatrix>> {
        // column-major vec: vec(P Y Q) = (Qᵀ ⊗ P) vec(Y)
        let (r, d) = (self.ws.r, self.ws.d);
        let rr = r * r;
        let vec_of = |m: &CMatrix| DMatrix::from_column_slice(rr, 1, m.as_slice());
        // per generator: [linear response to vec(W) | constant part], rr x (rr + 1)
        let mut resp: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(0, 0); d];
        let rhs_block = |j: usize| {
            let mut m = DMatrix::zeros(rr, rr + 1);
            m.columns_mut(0, rr).copy_from(&f[j].transpose().kronecker(&f[j]));
            m.column_mut(rr).copy_from(&(vec_of(&f[j]) - vec_of(&g[j])));
            m
        };
        let coupling = |j: usize| {
            let p = &f[j] * &self.adj[j];
            let q = &self.ws.weights[j] * &f[j];
            q.transpose().kronecker(&p)
        };
        for i in 0..d {
            let s = self.ws.star[i];
            if s < i {
                continue;
            }
            if s == i {
                let mat = DMatrix::identity(rr, rr) + coupling(i);
                resp[i] = mat.lu().solve(&rhs_block(i))?;
            } else {
                // x + C_i y = b_i, y + C_s x = b_s, eliminated to (I - C_i C_s) x = b_i - C_i b_s
                let (ci, cs) = (coupling(i), coupling(s));
                let (bi, bs) = (rhs_block(i), rhs_block(s));
                let mat = DMatrix::identity(rr, rr) - &ci * &cs;
                let x = mat.lu().solve(&(&bi - &ci * &bs))?;
                resp[s] = bs - cs * &x;
                resp[i] = x;
            }
        }
        // W = Σ_j a_j δ_j a_{j★}
        let mut folded = DMatrix::<Complex64>::zeros(rr, rr + 1);
        for (j, x) in resp.iter().enumerate() {
            for c in 0..=rr {
                let m = CMatrix::from_column_slice(r, r, x.column(c).as_slice());
                let image = &self.ws.weights[j] * m * &self.adj[j];
                for (dst, src) in folded.column_mut(c).iter_mut().zip(image.iter()) {
                    *dst += src;
                }
            }
        }
        let kmat = DMatrix::identity(rr, rr) - folded.columns(0, rr);
        let w = kmat.lu().solve(&folded.column(rr).into_owned())?;
        Some(
            resp.iter()
                .map(|x| {
                    let v = x.column(rr) + x.columns(0, rr) * &w;
                    CMatrix::from_column_slice(r, r, v.as_slice())
                })
                .collect(),
        )
    }

    /// Solves at this `z` from `g`, returning the fixed point, residual and iteration count.
    pub(crate) fn solve(
        &self,
        mut g: Vec<CMatrix>,
        opts: &ResolventOptions,
    ) -> Result<(Vec<CMatrix>, f64, usize), (f64, usize)> {
        let mut alpha = opts.damping;
        let mut f = match self.map(&g) {
            Some(f) => f,
            None => return Err((f64::INFINITY, 0)),
        };
        let mut res = Self::residual(&g, &f);
        let mut iters = 0;
        while res > opts.tol {
            if iters >= opts.max_iter || !res.is_finite() {
                return Err((res, iters));
            }
            iters += 1;
            if opts.newton {
                if let Some(step) = self.newton_direction(&g, &f) {
                    let mut t = 1.0;
                    let mut accepted = false;
                    for _ in 0..8 {
                        let trial: Vec<CMatrix> =
                            g.iter().zip(&step).map(|(a, b)| a + b * Complex64::new(t, 0.0)).collect();
                        if let Some(ft) = self.map(&trial) {
                            let rt = Self::residual(&trial, &ft);
                            if rt < res {
                                g = trial;
                                f = ft;
                                res = rt;
                                accepted = true;
                                break;
                            }
                        }
                        t *= 0.5;
                    }
                    if accepted {
                        continue;
                    }
                }
            }
            // damped fixed-point step
            let trial: Vec<CMatrix> = g
                .iter()
                .zip(&f)
                .map(|(a, b)| a * Complex64::new(1.0 - alpha, 0.0) + b * Complex64::new(alpha, 0.0))
                .collect();
            match self.map(&trial) {
                Some(ft) => {
                    let rt = Self::residual(&trial, &ft);
                    if rt > res {
                        alpha = (alpha * 0.5).max(1e-4);
                    }
                    g = trial;
                    f = ft;
                    res = rt;
                }
                None => {
                    alpha = (alpha * 0.5).max(1e-4);
                    if alpha <= 1e-4 {
                        return Err((res, iters));
                    }
                }
            }
        }
        Ok((g, res, iters))
    }

    pub(crate) fn state(&self, g: Vec<CMatrix>, residual: f64, iterations: usize) -> Result<ResolventState, FreeLimitError> {
        let g_oo = self.g_oo(&g).ok_or(FreeLimitError::SingularIteration { z: self.z })?;
        let a_hats = g.iter().enumerate().map(|(i, gi)| &self.ws.weights[i] * gi).collect();
        Ok(ResolventState {
            z: self.z,
            gammas: g,
            g_oo,
            a_hats,
            residual,
            iterations,
        })
    }
}

/// True when every `γ_i` and `G_oo` satisfy `-Im(·) ⪰ -HERGLOTZ_TOL` (only meaningful for `Im z > 0`).
pub fn is_herglotz(state: &ResolventState) -> bool {
    state
        .gammas
        .iter()
        .chain(std::iter::once(&state.g_oo))
        .all(|m| herglotz_margin(m) >= -HERGLOTZ_TOL * frobenius(m).max(1.0))
}

/// Solves at `z = mu + i η_final`, continuing in `η` from `eta_start` with warm starts.
pub fn solve_resolvent(
    ws: &WeightSystem,
    mu: Complex64,
    opts: &ResolventOptions,
) -> Result<ResolventState, FreeLimitError> {
    let r = ws.r;
    let schedule = opts.schedule();
    let z0 = mu + Complex64::new(0.0, schedule[0]);
    let mut g: Vec<CMatrix> = vec![CMatrix::identity(r, r) / z0; ws.d];
    let mut total = 0;
    let mut last: Option<ResolventState> = None;
    for &eta in &schedule {
        let rec = Recursion::new(ws, mu + Complex64::new(0.0, eta));
        let attempt = rec.solve(g.clone(), opts);
        let accepted = match attempt {
            Ok((sol, res, it)) => {
                total += it;
                let state = rec.state(sol, res, total)?;
                if eta > 0.0 && ws.symmetric && !is_herglotz(&state) {
                    None
                } else {
                    Some(state)
                }
            }
            Err((_, it)) => {
                total += it;
                None
            }
        };
        let state = match accepted {
            Some(s) => s,
            None if opts.newton => {
                // retry this level with plain damped iteration
                let plain = ResolventOptions {
                    newton: false,
                    ..opts.clone()
                };
                match rec.solve(g.clone(), &plain) {
                    Ok((sol, res, it)) => {
                        total += it;
                        let s = rec.state(sol, res, total)?;
                        if eta > 0.0 && ws.symmetric && !is_herglotz(&s) {
                            return Err(no_convergence(res, total, eta, last));
                        }
                        s
                    }
                    Err((res, it)) => return Err(no_convergence(res, total + it, eta, last)),
                }
            }
            None => return Err(no_convergence(f64::NAN, total, eta, last)),
        };
        g = state.gammas.clone();
        last = Some(state);
    }
    Ok(last.expect("schedule is nonempty"))
}

fn no_convergence(residual: f64, iterations: usize, eta: f64, last: Option<ResolventState>) -> FreeLimitError {
    FreeLimitError::NoConvergence {
        residual,
        iterations,
        eta,
        last: last.map(Box::new),
    }
}

/// Single solve at `z` warm-started from `guess` (no continuation). Returns
/// `None` unless the result converges and, for `Im z > 0`, is Herglotz.
pub fn refine_resolvent(
    ws: &WeightSystem,
    z: Complex64,
    guess: &[CMatrix],
    opts: &ResolventOptions,
) -> Option<ResolventState> {
    let rec = Recursion::new(ws, z);
    let quick = ResolventOptions {
        max_iter: opts.max_iter.min(60),
        ..opts.clone()
    };
    let (g, res, it) = rec.solve(guess.to_vec(), &quick).ok()?;
    let state = rec.state(g, res, it).ok()?;
    if z.im > 0.0 && ws.symmetric && !is_herglotz(&state) {
        return None;
    }
    Some(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, WeightSystem};
    use crate::numerics::cmatrix;

    fn scalar_branch(z: Complex64, d: f64) -> Complex64 {
        // γ = 1 / (z - (d-1) γ): (d-1) γ² - z γ + 1 = 0, root with Im γ < 0
        let disc = (z * z - 4.0 * (d - 1.0)).sqrt();
        let roots = [(z - disc) / (2.0 * (d - 1.0)), (z + disc) / (2.0 * (d - 1.0))];
        *roots
            .iter()
            .filter(|g| g.im < 0.0)
            .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap()
    }

    #[test]
    fn scalar_regular_matches_quadratic_root() {
        let ws = WeightSystem::regular(4);
        let opts = ResolventOptions {
            eta_final: 3.0,
            eta_start: 3.0,
            ..Default::default()
        };
        let s = solve_resolvent(&ws, Complex64::new(0.0, 0.0), &opts).unwrap();
        let want = scalar_branch(Complex64::new(0.0, 3.0), 4.0);
        for g in &s.gammas {
            assert!((g[(0, 0)] - want).norm() < 1e-9);
        }
        assert!(s.residual <= opts.tol);
        for mu in [-3.0, -1.0, 0.5, 2.0, 3.4, 3.5, 5.0] {
            let s = solve_resolvent(&ws, Complex64::new(mu, 0.0), &ResolventOptions::default()).unwrap();
            let want = scalar_branch(s.z, 4.0);
            assert!((s.gammas[0][(0, 0)] - want).norm() < 1e-7, "mu {mu}");
            assert!(is_herglotz(&s));
        }
    }

    #[test]
    fn neumann_regime_at_real_point() {
        let ws = preset("figure1").unwrap();
        let mu = ws.norm_bound() + 1.5;
        let opts = ResolventOptions {
            eta_final: 0.0,
            ..Default::default()
        };
        let s = solve_resolvent(&ws, Complex64::new(mu, 0.0), &opts).unwrap();
        let spread = ws.norm_bound();
        for g in &s.gammas {
            assert!(crate::numerics::frobenius(g) <= 5f64.sqrt() / (mu - spread) + 1e-9);
        }
    }

    #[test]
    fn figure1_atom_at_zero() {
        let ws = preset("figure1").unwrap();
        let s = solve_resolvent(&ws, Complex64::new(0.0, 0.0), &ResolventOptions::default()).unwrap();
        assert!(s.residual <= 1e-10);
        // mass times 1/η
        assert!(-s.im_trace() > 1e3, "{}", s.im_trace());
    }

    #[test]
    fn second_identity_at_fixed_point() {
        let ws = preset("figure1").unwrap();
        for mu in [1.0, 2.0, 0.15] {
            let s = solve_resolvent(&ws, Complex64::new(mu, 0.0), &ResolventOptions::default()).unwrap();
            for i in 0..ws.d {
                let s_i = ws.star[i];
                let lhs = &ws.weights[i] * &s.g_oo;
                let id = CMatrix::identity(5, 5);
                let rhs = &s.a_hats[i] * inv(&(id - &s.a_hats[s_i] * &s.a_hats[i])).unwrap();
                assert!((lhs - rhs).norm() <= 1e-8 * frobenius(&s.g_oo).max(1.0));
            }
        }
    }

    #[test]
    fn matrix_weights_herglotz() {
        let a = cmatrix(
            2,
            2,
            &[
                Complex64::new(0.3, 0.1),
                Complex64::new(-0.2, 0.4),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.1, -0.3),
            ],
        )
        .unwrap();
        let h = cmatrix(
            2,
            2,
            &[
                Complex64::new(0.2, 0.0),
                Complex64::new(0.1, 0.2),
                Complex64::new(0.1, -0.2),
                Complex64::new(-0.4, 0.0),
            ],
        )
        .unwrap();
        let ws = WeightSystem::new(h.clone(), vec![a.clone(), a.adjoint(), h], vec![1, 0, 2]);
        assert!(ws.is_valid());
        for mu in [-1.0, 0.0, 0.3, 1.2] {
            let s = solve_resolvent(&ws, Complex64::new(mu, 0.0), &ResolventOptions::default()).unwrap();
            assert!(is_herglotz(&s));
            assert!(s.residual <= 1e-10);
        }
    }

    #[test]
    fn plain_iteration_agrees_with_newton() {
        let ws = preset("figure1").unwrap();
        let plain = ResolventOptions {
            newton: false,
            eta_final: 1e-2,
            ..Default::default()
        };
        let newton = ResolventOptions {
            eta_final: 1e-2,
            ..Default::default()
        };
        let a = solve_resolvent(&ws, Complex64::new(1.3, 0.0), &plain).unwrap();
        let b = solve_resolvent(&ws, Complex64::new(1.3, 0.0), &newton).unwrap();
        assert!((&a.g_oo - &b.g_oo).norm() < 1e-8);
        assert!(b.iterations < a.iterations);
    }
}

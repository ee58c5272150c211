//! Non-backtracking operators `B = Σ_{j ≠ i★} a_j ⊗ S_i ⊗ E_ij` on
//! `C^r ⊗ C^n ⊗ C^d`, the quadratic correspondence `λ ↦ A_λ`, and radius
//! estimates on `K_0 = C^r ⊗ 1^⊥ ⊗ C^d`.
//!
//! Edge vectors use the layout `((x * d) + i) * r + b`.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::freelimit::ResolventState;
use crate::lift::{
    block_axpy, block_entries, check_compatible, ensure_dense, h0_matrix, helmert_apply, helmert_apply_adjoint,
    lift_matrix, norm, random_vector, LiftError, LiftOperator,
};
use crate::model::{ModelError, PermutationFamily, WeightSystem};
use crate::numerics::{self, min_singular_value, NumericsError};
use crate::rng::{rng_from_seed, split_seed};
use crate::CMatrix;

/// Largest `r n` accepted by [`ihara_bass_residual`].
pub const MAX_IHARA_BASS_DIM: usize = 512;
const SHIFT_TOL: f64 = 1e-10;
const RESOLVENT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NbError {
    /// `λ² - a_{i★} a_i` is singular for this generator (1-based).
    #[error("lambda^2 is in the spectrum of a_(i*) a_i for generator {0}")]
    SingularShift(usize),
    #[error("G_oo is singular at z = {0}")]
    SingularResolvent(Complex64),
    #[error("dimension r n = {dim} exceeds {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Matrix-free `B` for a weight system and a compatible permutation family.
#[derive(Debug, Clone)]
pub struct NBOperator {
    ws: WeightSystem,
    pf: PermutationFamily,
    blocks: Vec<Vec<Complex64>>,
}

impl NBOperator {
    pub fn weight_system(&self) -> &WeightSystem {
        &self.ws
    }

    pub fn family(&self) -> &PermutationFamily {
        &self.pf
    }

    pub fn dim(&self) -> usize {
        self.ws.r * self.pf.n * self.ws.d
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>, LiftError> {
        if v.len() != self.dim() {
            return Err(LiftError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    /// `(Bv)(x, i) = u(σ_i x) - a_{i★} v(σ_i x, i★)` with `u(y) = Σ_j a_j v(y, j)`.
    fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        let (r, d, n) = (self.ws.r, self.ws.d, self.pf.n);
        let zero = Complex64::new(0.0, 0.0);
        let mut u = vec![zero; n * r];
        for y in 0..n {
            let dst = &mut u[y * r..(y + 1) * r];
            for (j, blk) in self.blocks.iter().enumerate() {
                let at = (y * d + j) * r;
                block_axpy(blk, &v[at..at + r], dst);
            }
        }
        let mut back = vec![zero; r];
        for x in 0..n {
            for i in 0..d {
                let y = self.pf.perms[i][x];
                let s = self.ws.star[i];
                back.iter_mut().for_each(|z| *z = zero);
                let at = (y * d + s) * r;
                block_axpy(&self.blocks[s], &v[at..at + r], &mut back);
                let o = (x * d + i) * r;
                for b in 0..r {
                    out[o + b] = u[y * r + b] - back[b];
                }
            }
        }
    }

    /// Dense matrix of `B`.
    pub fn dense(&self) -> Result<CMatrix, LiftError> {
        let m = self.dim();
        ensure_dense(m)?;
        let mut out = CMatrix::zeros(m, m);
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        let mut col = e.clone();
        for c in 0..m {
            e[c] = Complex64::new(1.0, 0.0);
            self.apply_into(&e, &mut col);
            e[c] = Complex64::new(0.0, 0.0);
            out.set_column(c, &nalgebra::DVector::from_column_slice(&col));
        }
        Ok(out)
    }

    /// `B` restricted to `K_0`, in the Helmert basis along the vertex index.
    pub fn k0_matrix(&self) -> Result<CMatrix, LiftError> {
        let (block, n) = (self.ws.r * self.ws.d, self.pf.n);
        let m = block * (n - 1);
        ensure_dense(self.dim())?;
        let mut out = CMatrix::zeros(m, m);
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        let mut bv = v.clone();
        let mut col = e.clone();
        for c in 0..m {
            e[c] = Complex64::new(1.0, 0.0);
            helmert_apply(&e, block, &mut v);
            e[c] = Complex64::new(0.0, 0.0);
            self.apply_into(&v, &mut bv);
            helmert_apply_adjoint(&bv, block, &mut col);
            out.set_column(c, &nalgebra::DVector::from_column_slice(&col));
        }
        Ok(out)
    }
}

/// Builds `B`; `a_0` plays no role.
pub fn build_b(ws: &WeightSystem, pf: &PermutationFamily) -> Result<NBOperator, LiftError> {
    check_compatible(ws, pf)?;
    Ok(NBOperator {
        ws: ws.clone(),
        pf: pf.clone(),
        blocks: ws.weights.iter().map(block_entries).collect(),
    })
}

/// Orthogonal projection onto `K_0`: removes the vertex average of every `(i, b)` coordinate.
pub fn project_k0(v: &mut [Complex64], r: usize, d: usize) {
    let block = r * d;
    let n = v.len() / block;
    let mut mean = vec![Complex64::new(0.0, 0.0); block];
    for x in 0..n {
        for (m, z) in mean.iter_mut().zip(&v[x * block..(x + 1) * block]) {
            *m += z;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for x in 0..n {
        for (z, m) in v[x * block..(x + 1) * block].iter_mut().zip(&mean) {
            *z -= m;
        }
    }
}

/// `A_λ = a_0(λ) + Σ a_i(λ) ⊗ S_i` with `a_i(λ) = λ a_i (λ² - a_{i★} a_i)^{-1}`
/// and `a_0(λ) = -1 - Σ a_i (λ² - a_{i★} a_i)^{-1} a_{i★}`.
pub fn a_lambda(ws: &WeightSystem, lambda: Complex64) -> Result<WeightSystem, NbError> {
    ws.ensure_valid()?;
    let r = ws.r;
    let id = CMatrix::identity(r, r);
    let mut a0 = -id.clone();
    let mut weights = Vec::with_capacity(ws.d);
    for i in 0..ws.d {
        let adj = &ws.weights[ws.star[i]];
        let shift = &id * (lambda * lambda) - adj * &ws.weights[i];
        if min_singular_value(&shift) <= SHIFT_TOL {
            return Err(NbError::SingularShift(i + 1));
        }
        let inv = numerics::inv(&shift).map_err(|_| NbError::SingularShift(i + 1))?;
        let ai_inv = &ws.weights[i] * inv;
        a0 -= &ai_inv * adj;
        weights.push(ai_inv * lambda);
    }
    let mut out = WeightSystem::new(a0, weights, ws.star.clone());
    out.symmetric = false;
    Ok(out)
}

/// Smallest singular values of `A_λ` on the full space and on `H_0`.
/// Near zero exactly when `λ` is an eigenvalue of `B`, respectively of `B` on `K_0`.
pub fn ihara_bass_residual(
    ws: &WeightSystem,
    pf: &PermutationFamily,
    lambda: Complex64,
) -> Result<(f64, f64), NbError> {
    let dim = ws.r * pf.n;
    if dim > MAX_IHARA_BASS_DIM {
        return Err(NbError::DimensionTooLarge {
            dim,
            max: MAX_IHARA_BASS_DIM,
        });
    }
    let al = a_lambda(ws, lambda)?;
    let op = LiftOperator::new(&al, pf)?;
    let full = min_singular_value(&lift_matrix(&op)?);
    let h0 = min_singular_value(&h0_matrix(&op)?);
    Ok((full, h0))
}

/// Weights of `B_μ`: `a_0 = 0` and `â_i(μ) = a_i γ_i(μ)` from a solved resolvent at `μ`.
pub fn b_mu(ws: &WeightSystem, mu: Complex64, state: &ResolventState) -> Result<WeightSystem, NbError> {
    if (state.z - mu).norm() > 1e-12 * mu.norm().max(1.0) + state.eta() {
        return Err(NbError::Model(ModelError::InvalidRequest(format!(
            "resolvent solved at {} but mu = {mu}",
            state.z
        ))));
    }
    if min_singular_value(&state.g_oo) <= RESOLVENT_TOL * state.g_oo.norm().max(1.0) {
        return Err(NbError::SingularResolvent(state.z));
    }
    let mut out = WeightSystem::new(CMatrix::zeros(ws.r, ws.r), state.a_hats.clone(), ws.star.clone());
    out.symmetric = false;
    Ok(out)
}

/// `max_t |P (B P)^ℓ g_t|^{1/ℓ}` over `trials` seeded random unit vectors
/// `g_t ∈ K_0`, normalising after every step; an upper-biased estimate of `ρ(B|K_0)`.
pub fn radius_k0(b: &NBOperator, ell: usize, trials: usize, seed: u64) -> f64 {
    let (r, d) = (b.ws.r, b.ws.d);
    let ell = ell.max(1);
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(split_seed(seed, t));
            let mut g = random_vector(b.dim(), &mut rng);
            project_k0(&mut g, r, d);
            let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
            let mut log_growth = 0.0;
            let nrm = norm(&g);
            if nrm == 0.0 {
                return 0.0;
            }
            g.iter_mut().for_each(|z| *z /= nrm);
            for _ in 0..ell {
                b.apply_into(&g, &mut out);
                project_k0(&mut out, r, d);
                let nrm = norm(&out);
                if nrm == 0.0 {
                    return 0.0;
                }
                log_growth += nrm.ln();
                for (z, o) in g.iter_mut().zip(&out) {
                    *z = o / nrm;
                }
            }
            (log_growth / ell as f64).exp()
        })
        .reduce(|| 0.0, f64::max)
}

/// Default `ℓ = ⌊ln n⌋` (at least 1).
pub fn default_power(n: usize) -> usize {
    ((n as f64).ln().floor() as usize).max(1)
}

//! Matrix-free lift operators `A = a_0 ⊗ 1 + Σ a_i ⊗ S_i` and their spectra on
//! the nontrivial subspace `H_0`.
//!
//! Vectors on `C^r ⊗ C^n` use the x-major layout `x * r + b`.

mod helmert;
mod lanczos;
mod tensor;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::model::{ModelError, PermutationFamily, WeightSystem};
use crate::numerics::{self, NumericsError, MAX_DENSE_DIM};
use crate::rng::rng_from_seed;
use crate::spectral_set::SpectralSet;
use crate::CMatrix;

pub use helmert::{helmert_apply, helmert_apply_adjoint};
pub use lanczos::{lanczos_extremes, LanczosOptions, RitzPair, SymmetricOp};
pub use tensor::{build_tensor, extreme_eigs_h0_tensor, TensorLiftOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("vector has length {got}, operator dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("permutation family does not match the weight system: {0}")]
    Incompatible(String),
    #[error("operator is not self-adjoint (probe defect {defect:e})")]
    NotSelfAdjoint { defect: f64 },
    #[error("Lanczos did not converge after {iterations} iterations (worst residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense dimension {dim} exceeds {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Checks that `pf` can carry `ws`: same `d`, and `σ_{i★} = σ_i^{-1}` for the
/// weight system's own involution.
pub(crate) fn check_compatible(ws: &WeightSystem, pf: &PermutationFamily) -> Result<(), LiftError> {
    ws.ensure_valid()?;
    pf.check().map_err(LiftError::Incompatible)?;
    if pf.d() != ws.d {
        return Err(LiftError::Incompatible(format!(
            "{} permutations for {} generators",
            pf.d(),
            ws.d
        )));
    }
    for i in 0..ws.d {
        let (p, ps) = (&pf.perms[i], &pf.perms[ws.star[i]]);
        if (0..pf.n).any(|x| ps[p[x]] != x) {
            return Err(LiftError::Incompatible(format!(
                "perm {} is not the inverse of perm {}",
                ws.star[i] + 1,
                i + 1
            )));
        }
    }
    Ok(())
}

/// Row-major copy of an `r x r` block, for tight inner loops.
pub(crate) fn block_entries(m: &CMatrix) -> Vec<Complex64> {
    let r = m.nrows();
    (0..r * r).map(|k| m[(k / r, k % r)]).collect()
}

/// `out += m · v` for a row-major `r x r` block.
#[inline]
pub(crate) fn block_axpy(m: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    let r = v.len();
    for (a, o) in out.iter_mut().enumerate() {
        let row = &m[a * r..(a + 1) * r];
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, x) in row.iter().zip(v) {
            acc += w * x;
        }
        *o += acc;
    }
}

/// The lift `A` of a weight system along a permutation family.
#[derive(Debug, Clone)]
pub struct LiftOperator {
    ws: WeightSystem,
    pf: PermutationFamily,
    a0: Vec<Complex64>,
    blocks: Vec<Vec<Complex64>>,
}

impl LiftOperator {
    pub fn new(ws: &WeightSystem, pf: &PermutationFamily) -> Result<Self, LiftError> {
        check_compatible(ws, pf)?;
        Ok(Self {
            a0: block_entries(&ws.a0),
            blocks: ws.weights.iter().map(block_entries).collect(),
            ws: ws.clone(),
            pf: pf.clone(),
        })
    }

    pub fn weight_system(&self) -> &WeightSystem {
        &self.ws
    }

    pub fn family(&self) -> &PermutationFamily {
        &self.pf
    }

    pub fn n(&self) -> usize {
        self.pf.n
    }

    pub fn r(&self) -> usize {
        self.ws.r
    }

    pub fn dim(&self) -> usize {
        self.ws.r * self.pf.n
    }

    /// `(Av)(x) = a_0 v(x) + Σ_i a_i v(σ_i(x))`.
    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>, LiftError> {
        self.check_len(v)?;
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    fn check_len(&self, v: &[Complex64]) -> Result<(), LiftError> {
        if v.len() != self.dim() {
            return Err(LiftError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        let r = self.ws.r;
        if r == 1 {
            let a0 = self.a0[0];
            let w: Vec<Complex64> = self.blocks.iter().map(|b| b[0]).collect();
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = a0 * v[x];
                for (p, wi) in self.pf.perms.iter().zip(&w) {
                    acc += wi * v[p[x]];
                }
                *o = acc;
            }
            return;
        }
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for x in 0..self.pf.n {
            let dst = &mut out[x * r..(x + 1) * r];
            block_axpy(&self.a0, &v[x * r..(x + 1) * r], dst);
            for (p, b) in self.pf.perms.iter().zip(&self.blocks) {
                let y = p[x];
                block_axpy(b, &v[y * r..(y + 1) * r], dst);
            }
        }
    }

    /// Probe test `<u, Av> = <Au, v>` on seeded random vectors; returns the relative defect.
    pub fn adjoint_defect(&self, seed: u64) -> f64 {
        probe_adjoint_defect(self.dim(), |v, o| self.apply_into(v, o), seed)
    }
}

pub(crate) fn random_vector(dim: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

pub(crate) fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn probe_adjoint_defect(
    dim: usize,
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    seed: u64,
) -> f64 {
    let mut rng = rng_from_seed(seed);
    let u = random_vector(dim, &mut rng);
    let v = random_vector(dim, &mut rng);
    let mut au = vec![Complex64::new(0.0, 0.0); dim];
    let mut av = au.clone();
    apply(&u, &mut au);
    apply(&v, &mut av);
    let defect = (dot(&u, &av) - dot(&au, &v)).norm();
    let scale = norm(&au).max(norm(&av)) * norm(&u).max(norm(&v));
    if scale == 0.0 {
        0.0
    } else {
        defect / scale
    }
}

/// Orthogonal projection onto `H_0`: removes the mean over `x` of every block coordinate.
pub fn project_h0(v: &mut [Complex64], r: usize) {
    let n = v.len() / r;
    if n == 0 {
        return;
    }
    for b in 0..r {
        let mean: Complex64 = v.iter().skip(b).step_by(r).sum::<Complex64>() / n as f64;
        v.iter_mut().skip(b).step_by(r).for_each(|z| *z -= mean);
    }
}

const ADJOINT_TOL: f64 = 1e-10;

fn ensure_self_adjoint(op: &LiftOperator) -> Result<(), LiftError> {
    let defect = op.adjoint_defect(0x5e1f_ad01);
    if !op.ws.symmetric || defect > ADJOINT_TOL {
        return Err(LiftError::NotSelfAdjoint { defect });
    }
    Ok(())
}

struct H0View<'a>(&'a LiftOperator);

impl SymmetricOp for H0View<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn subspace_dim(&self) -> usize {
        self.0.r() * (self.0.n() - 1)
    }
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        self.0.apply_into(v, out);
    }
    fn project(&self, v: &mut [Complex64]) {
        project_h0(v, self.0.r());
    }
}

/// Extreme eigenvalues of `A` restricted to `H_0`.
///
/// Returns `(smallest, largest)`, each with up to `k` certified Ritz pairs:
/// `smallest` ascending, `largest` descending.
pub fn extreme_eigs_h0(
    op: &LiftOperator,
    k: usize,
    tol: f64,
) -> Result<(Vec<RitzPair>, Vec<RitzPair>), LiftError> {
    extreme_eigs_h0_with(op, &LanczosOptions::new(k, tol))
}

pub fn extreme_eigs_h0_with(
    op: &LiftOperator,
    opts: &LanczosOptions,
) -> Result<(Vec<RitzPair>, Vec<RitzPair>), LiftError> {
    ensure_self_adjoint(op)?;
    lanczos_extremes(&H0View(op), opts)
}

pub(crate) fn ensure_dense(dim: usize) -> Result<(), LiftError> {
    if dim > MAX_DENSE_DIM {
        return Err(LiftError::DimensionTooLarge {
            dim,
            max: MAX_DENSE_DIM,
        });
    }
    Ok(())
}

/// Dense matrix of `A` on the full space `C^r ⊗ C^n`.
pub fn lift_matrix(op: &LiftOperator) -> Result<CMatrix, LiftError> {
    let m = op.dim();
    ensure_dense(m)?;
    let mut out = CMatrix::zeros(m, m);
    let mut e = vec![Complex64::new(0.0, 0.0); m];
    let mut col = e.clone();
    for c in 0..m {
        e[c] = Complex64::new(1.0, 0.0);
        op.apply_into(&e, &mut col);
        e[c] = Complex64::new(0.0, 0.0);
        out.set_column(c, &nalgebra::DVector::from_column_slice(&col));
    }
    Ok(out)
}

/// `A` written in the orthonormal basis `Q ⊗ Id_r` of `H_0`, where `Q` is
/// the Helmert basis of `1^⊥`. Size `r(n-1)`.
pub fn h0_matrix(op: &LiftOperator) -> Result<CMatrix, LiftError> {
    let (r, n) = (op.r(), op.n());
    let m = r * (n - 1);
    ensure_dense(op.dim())?;
    let mut out = CMatrix::zeros(m, m);
    let mut e = vec![Complex64::new(0.0, 0.0); m];
    let mut v = vec![Complex64::new(0.0, 0.0); op.dim()];
    let mut av = v.clone();
    let mut col = e.clone();
    for c in 0..m {
        e.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        e[c] = Complex64::new(1.0, 0.0);
        helmert_apply(&e, r, &mut v);
        op.apply_into(&v, &mut av);
        helmert_apply_adjoint(&av, r, &mut col);
        for (row, z) in col.iter().enumerate() {
            out[(row, c)] = *z;
        }
    }
    Ok(out)
}

/// All `r(n-1)` eigenvalues of `A` on `H_0`, from the dense Helmert-basis matrix.
pub fn dense_spectrum_h0(op: &LiftOperator) -> Result<SpectralSet, LiftError> {
    ensure_self_adjoint(op)?;
    let m = h0_matrix(op)?;
    Ok(SpectralSet::finite(numerics::hermitian_eigenvalues(&m)?))
}

/// Dense eigenvalues on `H_0` with the residual `|Mv - λv|` of each eigenpair.
pub fn dense_spectrum_h0_with_residuals(op: &LiftOperator) -> Result<Vec<(f64, f64)>, LiftError> {
    ensure_self_adjoint(op)?;
    let m = h0_matrix(op)?;
    let eig = numerics::hermitian_eig(&m)?;
    let mv = &m * &eig.eigenvectors;
    Ok(eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let res = (mv.column(k) - eig.eigenvectors.column(k) * Complex64::new(lambda, 0.0)).norm();
            (lambda, res)
        })
        .collect())
}

/// Writes `index,eigenvalue,residual` rows (1-based index).
pub fn write_spectrum_csv<W: std::io::Write>(
    rows: &[(f64, f64)],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "eigenvalue", "residual"])?;
    for (k, (lambda, res)) in rows.iter().enumerate() {
        w.write_record([(k + 1).to_string(), format!("{lambda:.17e}"), format!("{res:.3e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, sample_symmetric};
    use crate::numerics::{cmatrix, hermitian_eigenvalues};
    use nalgebra::DMatrix;

    /// Σ a_i ⊗ S_i + a_0 ⊗ Id assembled entrywise, with `(S_i)_{xy} = 1(σ_i(x) = y)`.
    pub(crate) fn dense_lift(ws: &WeightSystem, pf: &PermutationFamily) -> CMatrix {
        let (r, n) = (ws.r, pf.n);
        let mut m = DMatrix::zeros(r * n, r * n);
        for x in 0..n {
            for a in 0..r {
                for b in 0..r {
                    m[(x * r + a, x * r + b)] += ws.a0[(a, b)];
                    for (i, p) in pf.perms.iter().enumerate() {
                        m[(x * r + a, p[x] * r + b)] += ws.weights[i][(a, b)];
                    }
                }
            }
        }
        m
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_vectors_see_base_adjacency() {
        let ws = preset("figure1").unwrap();
        let pf = sample_symmetric(6, 7, 14, 3).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let f: Vec<Complex64> = (0..5).map(|b| Complex64::new(b as f64 + 1.0, 0.5)).collect();
        let v: Vec<Complex64> = (0..6).flat_map(|_| f.clone()).collect();
        let a1f = crate::model::base_adjacency(&ws) * nalgebra::DVector::from_vec(f);
        let av = op.matvec(&v).unwrap();
        for x in 0..6 {
            for b in 0..5 {
                assert!((av[x * 5 + b] - a1f[b]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_cycle_shifts() {
        let mut ws = WeightSystem::scalar(0.0, &[1.0, 0.0], 1);
        ws.symmetric = false;
        let pf = PermutationFamily::from_perms(3, 1, vec![vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let v = vec![c(1.0), c(0.0), c(0.0)];
        // (Av)(x) = v(σ(x)): only x with σ(x) = 0, i.e. x = 2, sees the mass
        assert_eq!(op.matvec(&v).unwrap(), vec![c(0.0), c(0.0), c(1.0)]);
        assert!(matches!(
            op.matvec(&[c(1.0)]),
            Err(LiftError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn matches_dense_assembly() {
        let mut ws = preset("figure1").unwrap();
        ws.a0 = cmatrix(5, 5, &(0..25).map(|k| c(((k * 7) % 5) as f64)).collect::<Vec<_>>()).unwrap();
        ws.symmetric = false;
        let pf = sample_symmetric(8, 7, 14, 11).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let dense = dense_lift(&ws, &pf);
        let mut rng = rng_from_seed(1);
        for _ in 0..4 {
            let v = random_vector(op.dim(), &mut rng);
            let got = op.matvec(&v).unwrap();
            let want = &dense * nalgebra::DVector::from_vec(v);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn incompatible_family_rejected() {
        let ws = WeightSystem::regular(4);
        let pf = sample_symmetric(6, 1, 4, 0).unwrap();
        assert!(matches!(LiftOperator::new(&ws, &pf), Err(LiftError::Incompatible(_))));
        let pf = sample_symmetric(6, 1, 2, 0).unwrap();
        assert!(LiftOperator::new(&ws, &pf).is_err());
    }

    #[test]
    fn projection_properties() {
        let mut rng = rng_from_seed(5);
        let v = random_vector(3 * 7, &mut rng);
        let mut p = v.clone();
        project_h0(&mut p, 3);
        for b in 0..3 {
            let s: Complex64 = p.iter().skip(b).step_by(3).sum();
            assert!(s.norm() < 1e-12 * norm(&v));
        }
        let mut pp = p.clone();
        project_h0(&mut pp, 3);
        assert!(pp.iter().zip(&p).all(|(a, b)| (a - b).norm() < 1e-15));
        let rest: Vec<Complex64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
        let lhs = norm(&v).powi(2);
        assert!((lhs - norm(&p).powi(2) - norm(&rest).powi(2)).abs() < 1e-12 * lhs);
        let mut ones = vec![c(2.0); 6];
        project_h0(&mut ones, 2);
        assert!(norm(&ones) == 0.0);
    }

    #[test]
    fn a_commutes_with_projection() {
        let ws = preset("figure1").unwrap();
        let pf = sample_symmetric(10, 7, 14, 2).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let mut rng = rng_from_seed(9);
        let v = random_vector(op.dim(), &mut rng);
        let mut pav = op.matvec(&v).unwrap();
        project_h0(&mut pav, 5);
        let mut pv = v.clone();
        project_h0(&mut pv, 5);
        let apv = op.matvec(&pv).unwrap();
        let diff: Vec<Complex64> = pav.iter().zip(&apv).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-10 * ws.norm_bound() * norm(&v));
        assert!(op.adjoint_defect(4) < 1e-12);
    }

    #[test]
    fn swap_on_two_points() {
        let ws = WeightSystem::scalar(0.0, &[1.0], 0);
        let pf = sample_symmetric(2, 0, 1, 0).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let s = dense_spectrum_h0(&op).unwrap();
        assert_eq!(s.components().len(), 1);
        assert!((s.min().unwrap() + 1.0).abs() < 1e-14);
        let (lo, hi) = extreme_eigs_h0(&op, 1, 1e-10).unwrap();
        assert!((lo[0].value + 1.0).abs() < 1e-12 && (hi[0].value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_matches_dense_on_small_regular_lift() {
        let ws = WeightSystem::regular(4);
        for seed in 0..3 {
            let pf = sample_symmetric(8, 2, 4, seed).unwrap();
            let op = LiftOperator::new(&ws, &pf).unwrap();
            let SpectralSet::Finite(all) = dense_spectrum_h0(&op).unwrap() else {
                unreachable!()
            };
            let (lo, hi) = extreme_eigs_h0(&op, 2, 1e-10).unwrap();
            assert!((lo[0].value - all[0]).abs() < 1e-8);
            assert!((hi[0].value - all[all.len() - 1]).abs() < 1e-8);
            for p in lo.iter().chain(&hi) {
                assert!(p.residual <= 1e-10);
            }
        }
    }

    #[test]
    fn h0_and_h1_spectra_partition_the_full_spectrum() {
        let ws = preset("figure1").unwrap();
        let pf = sample_symmetric(9, 7, 14, 4).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let SpectralSet::Finite(mut ours) = dense_spectrum_h0(&op).unwrap() else {
            unreachable!()
        };
        ours.extend(hermitian_eigenvalues(&crate::model::base_adjacency(&ws)).unwrap());
        ours.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let full = hermitian_eigenvalues(&dense_lift(&ws, &pf)).unwrap();
        assert_eq!(ours.len(), full.len());
        for (a, b) in ours.iter().zip(&full) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn figure1_spectrum_within_norm_bound() {
        let ws = preset("figure1").unwrap();
        let pf = sample_symmetric(40, 7, 14, 17).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        let s = dense_spectrum_h0(&op).unwrap();
        let bound = ws.norm_bound() + 1.0;
        assert_eq!(s.components().len(), 5 * 39);
        assert!(s.min().unwrap() >= -bound && s.max().unwrap() <= bound);
        let rows = dense_spectrum_h0_with_residuals(&op).unwrap();
        assert!(rows.iter().all(|&(_, res)| res < 1e-10));
    }

    #[test]
    fn non_symmetric_rejected() {
        let mut ws = WeightSystem::scalar(0.0, &[1.0, 2.0], 1);
        ws.symmetric = false;
        let pf = sample_symmetric(6, 1, 2, 0).unwrap();
        let op = LiftOperator::new(&ws, &pf).unwrap();
        assert!(matches!(extreme_eigs_h0(&op, 1, 1e-8), Err(LiftError::NotSelfAdjoint { .. })));
        assert!(dense_spectrum_h0(&op).is_err());
    }

    #[test]
    fn spectrum_csv_layout() {
        let mut buf = Vec::new();
        write_spectrum_csv(&[(-1.0, 0.0), (2.5, 1e-12)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,eigenvalue,residual");
        assert!(lines[2].starts_with("2,2.5"));
    }
}

//! The completely positive map `(Lx)_ii = Σ_{j≠i★} b_j x_jj b_j*` on
//! block-diagonal matrices, its Perron value, and `ρ(B★) = ρ(L)^{1/2}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FreeLimitError;
use crate::model::WeightSystem;
use crate::numerics::hermitian_eigenvalues;
use crate::CMatrix;

#[derive(Debug, Clone)]
pub struct CPMapL {
    pub r: usize,
    pub star: Vec<usize>,
    pub b: Vec<CMatrix>,
    b_adj: Vec<CMatrix>,
}

pub fn build_l(b: &[CMatrix], star: &[usize]) -> CPMapL {
    let r = b.first().map_or(0, |m| m.nrows());
    CPMapL {
        r,
        star: star.to_vec(),
        b: b.to_vec(),
        b_adj: b.iter().map(|m| m.adjoint()).collect(),
    }
}

impl CPMapL {
    pub fn d(&self) -> usize {
        self.b.len()
    }

    /// Block-diagonal identity, one `r x r` block per generator.
    pub fn identity(&self) -> Vec<CMatrix> {
        vec![CMatrix::identity(self.r, self.r); self.d()]
    }

    pub fn apply(&self, x: &[CMatrix]) -> Vec<CMatrix> {
        let r = self.r;
        let p: Vec<CMatrix> = (0..self.d())
            .map(|j| &self.b[j] * &x[j] * &self.b_adj[j])
            .collect();
        let mut total = CMatrix::zeros(r, r);
        for pj in &p {
            total += pj;
        }
        (0..self.d()).map(|i| &total - &p[self.star[i]]).collect()
    }

    /// `(L*y)_jj = b_j* (Σ_{i≠j★} y_ii) b_j`.
    pub fn apply_adjoint(&self, y: &[CMatrix]) -> Vec<CMatrix> {
        let r = self.r;
        let mut total = CMatrix::zeros(r, r);
        for yi in y {
            total += yi;
        }
        (0..self.d())
            .map(|j| &self.b_adj[j] * (&total - &y[self.star[j]]) * &self.b[j])
            .collect()
    }

    /// Matrix of `L` on `⊕_i C^{r x r}`; coordinates `i * r² + (column-major index)`.
    pub fn dense(&self) -> CMatrix {
        self.matricize(|x| self.apply(x))
    }

    pub fn dense_adjoint(&self) -> CMatrix {
        self.matricize(|x| self.apply_adjoint(x))
    }

    fn matricize(&self, f: impl Fn(&[CMatrix]) -> Vec<CMatrix>) -> CMatrix {
        let (r, d) = (self.r, self.d());
        let rr = r * r;
        let mut out = DMatrix::zeros(d * rr, d * rr);
        let mut x = vec![CMatrix::zeros(r, r); d];
        for col in 0..d * rr {
            let (j, k) = (col / rr, col % rr);
            x[j][(k % r, k / r)] = Complex64::new(1.0, 0.0);
            let y = f(&x);
            x[j][(k % r, k / r)] = Complex64::new(0.0, 0.0);
            for (i, yi) in y.iter().enumerate() {
                for (kk, z) in yi.as_slice().iter().enumerate() {
                    out[(i * rr + kk, col)] = *z;
                }
            }
        }
        out
    }
}

pub(crate) fn block_norm(x: &[CMatrix]) -> f64 {
    x.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn block_dot(x: &[CMatrix], y: &[CMatrix]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.dotc(b)).sum()
}

/// Perron value of `L` with its PSD eigenvector.
#[derive(Debug, Clone)]
pub struct CpRadius {
    pub rho: f64,
    pub eigenvector: Vec<CMatrix>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for `ρ(L)` from the identity.
///
/// The iteration runs on `L + c` with `c` a quarter of a crude radius
/// estimate, which leaves the eigenvector unchanged but makes `ρ + c` the
/// unique eigenvalue of largest modulus (periodic peripheral eigenvalues
/// such as `-ρ` on bipartite structures otherwise stall the iteration).
pub fn cp_radius(l: &CPMapL, tol: f64, max_iter: usize) -> Result<CpRadius, FreeLimitError> {
    let out = cp_radius_from(l, &l.identity(), tol, max_iter);
    if out.converged {
        Ok(out)
    } else {
        Err(FreeLimitError::CpNoConvergence {
            estimate: out.rho,
            iterations: out.iterations,
        })
    }
}

/// Same as [`cp_radius`] from a given positive-definite start; never fails,
/// `converged` reports whether the stopping rule was met.
pub fn cp_radius_from(l: &CPMapL, start: &[CMatrix], tol: f64, max_iter: usize) -> CpRadius {
    let d = l.d();
    if d == 0 || l.r == 0 {
        return CpRadius {
            rho: 0.0,
            eigenvector: start.to_vec(),
            iterations: 0,
            converged: true,
        };
    }
    let mut x: Vec<CMatrix> = start.to_vec();
    let nx = block_norm(&x);
    x.iter_mut().for_each(|m| *m /= Complex64::new(nx, 0.0));
    let lx0 = l.apply(&x);
    let crude = block_norm(&lx0);
    if crude == 0.0 {
        return CpRadius {
            rho: 0.0,
            eigenvector: x,
            iterations: 1,
            converged: true,
        };
    }
    let shift = 0.25 * crude;
    let mut rho_prev = f64::INFINITY;
    let mut rho = crude;
    let mut lx = lx0;
    for it in 1..=max_iter {
        rho = block_dot(&x, &lx).re;
        let res = x
            .iter()
            .zip(&lx)
            .map(|(a, b)| (b - a * Complex64::new(rho, 0.0)).norm_squared())
            .sum::<f64>()
            .sqrt();
        let scale = rho.abs().max(f64::MIN_POSITIVE);
        if (rho - rho_prev).abs() <= tol * scale && res <= tol.sqrt() * scale {
            return CpRadius {
                rho: rho.max(0.0),
                eigenvector: x,
                iterations: it,
                converged: true,
            };
        }
        rho_prev = rho;
        // x <- (L + c) x, kept Hermitian, normalised
        let mut next: Vec<CMatrix> = lx
            .iter()
            .zip(&x)
            .map(|(a, b)| {
                let y = a + b * Complex64::new(shift, 0.0);
                (&y + y.adjoint()) * Complex64::new(0.5, 0.0)
            })
            .collect();
        let nn = block_norm(&next);
        if nn == 0.0 || !nn.is_finite() {
            break;
        }
        next.iter_mut().for_each(|m| *m /= Complex64::new(nn, 0.0));
        x = next;
        lx = l.apply(&x);
    }
    CpRadius {
        rho: rho.max(0.0),
        eigenvector: x,
        iterations: max_iter,
        converged: false,
    }
}

/// Smallest eigenvalue over the blocks of a block-diagonal Hermitian matrix.
pub fn min_block_eigenvalue(x: &[CMatrix]) -> f64 {
    x.iter()
        .map(|m| {
            let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
            hermitian_eigenvalues(&h).map_or(f64::NEG_INFINITY, |v| v[0])
        })
        .fold(f64::INFINITY, f64::min)
}

pub const CP_TOL: f64 = 1e-12;
pub const CP_MAX_ITER: usize = 100_000;

/// `ρ(B★) = ρ(L)^{1/2}` with `L` built from the weights `a_i`.
pub fn rho_b_star(ws: &WeightSystem) -> Result<f64, FreeLimitError> {
    let l = build_l(&ws.weights, &ws.star);
    Ok(cp_radius(&l, CP_TOL, CP_MAX_ITER)?.rho.sqrt())
}

/// `((1/(rd)) tr Z_n)^{1/(2n)}` for `n = 1..=n_max`, with `Z_0 = Id` and `Z_{n+1} = L(Z_n)`.
pub fn gelfand_crosscheck(ws: &WeightSystem, n_max: usize) -> Vec<f64> {
    let l = build_l(&ws.weights, &ws.star);
    let norm = (ws.r * ws.d.max(1)) as f64;
    let mut z = l.identity();
    (1..=n_max)
        .map(|n| {
            z = l.apply(&z);
            let tr: f64 = z.iter().map(|m| m.trace().re).sum();
            (tr / norm).max(0.0).powf(1.0 / (2.0 * n as f64))
        })
        .collect()
}

/// The sequence `Z_n` itself (PSD block-diagonals), `n = 0..=n_max`.
pub fn gelfand_blocks(ws: &WeightSystem, n_max: usize) -> Vec<Vec<CMatrix>> {
    let l = build_l(&ws.weights, &ws.star);
    let mut out = vec![l.identity()];
    for _ in 0..n_max {
        let next = l.apply(out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_star, preset};
    use crate::numerics::general_eig_dense;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_blocks(r: usize, d: usize, seed: u64) -> Vec<CMatrix> {
        let mut rng = rng_from_seed(seed);
        (0..d)
            .map(|_| {
                CMatrix::from_fn(r, r, |_, _| {
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                })
            })
            .collect()
    }

    #[test]
    fn unit_weights() {
        let ws = WeightSystem::regular(5);
        let l = build_l(&ws.weights, &ws.star);
        let y = l.apply(&l.identity());
        assert!(y.iter().all(|m| (m[(0, 0)].re - 4.0).abs() < 1e-15));
        let cp = cp_radius(&l, 1e-13, 1000).unwrap();
        assert!((cp.rho - 4.0).abs() < 1e-10);
        assert!((rho_b_star(&ws).unwrap() - 2.0).abs() < 1e-10);
        let seq = gelfand_crosscheck(&ws, 6);
        assert!(seq.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn single_generator_is_zero() {
        let ws = WeightSystem::scalar(0.0, &[1.0], 0);
        let l = build_l(&ws.weights, &ws.star);
        assert!(block_norm(&l.apply(&l.identity())) == 0.0);
        assert_eq!(rho_b_star(&ws).unwrap(), 0.0);
    }

    #[test]
    fn matches_naive_double_loop() {
        let (r, d) = (3, 4);
        let b = random_blocks(r, d, 1);
        let star = canonical_star(d, 1);
        let l = build_l(&b, &star);
        let x = random_blocks(r, d, 2);
        let y = l.apply(&x);
        for i in 0..d {
            let mut want = CMatrix::zeros(r, r);
            for j in 0..d {
                if j != star[i] {
                    want += &b[j] * &x[j] * b[j].adjoint();
                }
            }
            assert!((&y[i] - want).norm() < 1e-13);
        }
        // adjoint identity <y, L x> = <L* y, x>
        let lhs = block_dot(&y, &l.apply(&x));
        let rhs = block_dot(&l.apply_adjoint(&y), &x);
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn power_iteration_matches_dense_matricization() {
        for seed in 0..10u64 {
            let (r, d, q) = (2, 4, (seed % 3) as usize % 3);
            let q = q.min(d / 2);
            let b = random_blocks(r, d, seed + 100);
            let l = build_l(&b, &canonical_star(d, q));
            let cp = cp_radius(&l, 1e-14, 100_000).unwrap();
            let dense = general_eig_dense(&l.dense()).unwrap();
            let top = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((cp.rho - top).abs() < 1e-8 * top.max(1.0), "seed {seed}: {} vs {top}", cp.rho);
            assert!(min_block_eigenvalue(&cp.eigenvector) >= -1e-10);
        }
    }

    #[test]
    fn scaling_is_quadratic() {
        let b = random_blocks(2, 3, 7);
        let star = canonical_star(3, 1);
        let rho = cp_radius(&build_l(&b, &star), 1e-14, 100_000).unwrap().rho;
        let scaled: Vec<CMatrix> = b.iter().map(|m| m * Complex64::new(0.0, 3.0)).collect();
        let rho3 = cp_radius(&build_l(&scaled, &star), 1e-14, 100_000).unwrap().rho;
        assert!((rho3 - 9.0 * rho).abs() < 1e-9 * rho3);
    }

    #[test]
    fn gelfand_blocks_are_psd_and_match_word_sums() {
        let ws = preset("figure1").unwrap();
        let blocks = gelfand_blocks(&ws, 3);
        for z in &blocks {
            assert!(min_block_eigenvalue(z) >= -1e-12);
        }
        // (Z_n)_{i0} = Σ over non-backtracking words i0 -> i1 -> .. -> in of P P*, P = b_{i1}..b_{in}
        let d = ws.d;
        let n = 3;
        for i0 in [0usize, 5, 9] {
            let mut acc = CMatrix::zeros(5, 5);
            let mut stack: Vec<(usize, usize, CMatrix)> = vec![(i0, 0, CMatrix::identity(5, 5))];
            while let Some((last, len, p)) = stack.pop() {
                if len == n {
                    acc += &p * p.adjoint();
                    continue;
                }
                for j in 0..d {
                    if j != ws.star[last] {
                        stack.push((j, len + 1, &p * &ws.weights[j]));
                    }
                }
            }
            assert!((&acc - &blocks[n][i0]).norm() < 1e-10);
        }
    }

    #[test]
    fn continuity_in_the_weights() {
        let ws = preset("figure1").unwrap();
        let base = rho_b_star(&ws).unwrap();
        let mut w = ws.clone();
        w.weights[0][(0, 4)] += Complex64::new(1e-6, 0.0);
        let moved = rho_b_star(&w).unwrap();
        assert!((moved - base).abs() <= 1e-4);
    }
}

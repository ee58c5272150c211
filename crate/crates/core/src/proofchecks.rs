//! Exact and extended-precision checks of two auxiliary facts: the signed
//! binomial bound and the Krein–Rutman structure of the CP map `L`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::freelimit::{build_l, cp_radius, min_block_eigenvalue, CPMapL, FreeLimitError, CP_MAX_ITER, CP_TOL};
use crate::numerics::{general_eig_dense, NumericsError};
use crate::rng::{rng_from_seed, split_seed};
use crate::CMatrix;

/// Largest `d r²` accepted by [`krein_rutman_check`].
pub const MAX_KR_DIM: usize = 144;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProofError {
    #[error("dense dimension d r^2 = {dim} exceeds {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    FreeLimit(#[from] FreeLimitError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Double-double number `hi + lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let c = Dd::renorm(s.hi, s.lo + t.hi);
        Dd::renorm(c.hi, c.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::renorm(q1, q2).add(Dd::from(q3))
    }

    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // one Newton step on the double estimate
        let x = self.hi.sqrt();
        let xd = Dd::from(x);
        let r = self.sub(xd.mul(xd));
        xd.add(Dd::from(r.hi / (2.0 * x)))
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Parameters of the signed binomial expectation; `p, q ∈ (0, 1/4]`, `z ≥ 1`, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinTParams {
    pub z: f64,
    pub k: u32,
    pub p: f64,
    pub q: f64,
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite parameter")
}

impl BinTParams {
    pub fn validate(&self) -> Result<(), ProofError> {
        let ok = self.z >= 1.0
            && self.k >= 1
            && self.p > 0.0
            && self.p <= 0.25
            && self.q > 0.0
            && self.q <= 0.25;
        if ok {
            Ok(())
        } else {
            Err(ProofError::InvalidParams(format!("{self:?}")))
        }
    }

    /// `8(1 - p - p/q)² ≤ 4 z k² √q ≤ 1`, decided in exact rational arithmetic
    /// (both sides are squared; they are non-negative).
    pub fn precondition(&self) -> bool {
        let (z, p, q) = (rational(self.z), rational(self.p), rational(self.q));
        let k = BigRational::from_integer(BigInt::from(self.k));
        let one = BigRational::one();
        let t = &one - &p - &p / &q;
        let lhs = BigRational::from_integer(8.into()) * &t * &t;
        let m = BigRational::from_integer(4.into()) * z * &k * &k;
        let m2q = &m * &m * &q;
        &lhs * &lhs <= m2q && m2q <= one
    }

    /// `8 (3 √(2z) k q^{1/4})^k`.
    pub fn bound(&self) -> f64 {
        8.0 * (3.0 * (2.0 * self.z).sqrt() * self.k as f64 * self.q.powf(0.25)).powi(self.k as i32)
    }
}

fn binomial(k: u32, t: u32) -> f64 {
    (0..t).fold(1.0, |acc, j| acc * (k - j) as f64 / (j + 1) as f64).round()
}

/// `E (-1)^N Π_{n<2N} (1/√q - z n)` for `N ~ Bin(k, p)`, as a finite sum in
/// double-double arithmetic.
pub fn bint_expectation(params: &BinTParams) -> f64 {
    let BinTParams { z, k, p, q } = *params;
    let s = Dd::from(1.0).div(Dd::from(q).sqrt());
    let pd = Dd::from(p);
    let qd = Dd::from(1.0).sub(pd);
    let mut total = Dd::ZERO;
    let mut prod = Dd::from(1.0);
    for t in 0..=k {
        if t > 0 {
            for n in [2 * (t - 1), 2 * t - 1] {
                prod = prod.mul(s.sub(Dd::from(z).mul(Dd::from(n as f64))));
            }
        }
        let mut w = Dd::from(binomial(k, t));
        for _ in 0..t {
            w = w.mul(pd);
        }
        for _ in t..k {
            w = w.mul(qd);
        }
        let term = w.mul(prod);
        total = if t % 2 == 0 { total.add(term) } else { total.sub(term) };
    }
    total.value()
}

/// Exact value when `√q` is rational (`q` a power of 4, or `q = 0` excluded).
pub fn bint_expectation_exact(params: &BinTParams) -> Option<BigRational> {
    let BinTParams { z, k, p, q } = *params;
    let sqrt_q = q.sqrt();
    if sqrt_q * sqrt_q != q {
        return None;
    }
    let s = BigRational::one() / rational(sqrt_q);
    let (z, p) = (rational(z), rational(p));
    let one = BigRational::one();
    let mut total = BigRational::zero();
    let mut prod = BigRational::one();
    for t in 0..=k {
        if t > 0 {
            for n in [2 * (t - 1), 2 * t - 1] {
                prod *= &s - &z * BigRational::from_integer(BigInt::from(n));
            }
        }
        let mut w = BigRational::from_integer(BigInt::from(binomial(k, t) as u64));
        for _ in 0..t {
            w *= &p;
        }
        for _ in t..k {
            w *= &one - &p;
        }
        let term = w * &prod;
        if t % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    Some(total)
}

/// Outcome of the bound check over a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTGridReport {
    pub points: usize,
    pub admissible: usize,
    pub violations: Vec<BinTParams>,
    /// Largest `|value| / bound` over admissible points.
    pub worst_ratio: f64,
}

/// `z ∈ {1, 2}`, `k ∈ 1..=8`, `p = 2^-j` for `j ∈ 2..=10`, `q = 2^-j` for `j ∈ 4..=20`.
pub fn bint_default_grid() -> Vec<BinTParams> {
    let mut out = Vec::new();
    for z in [1.0, 2.0] {
        for k in 1..=8 {
            for jp in 2..=10 {
                for jq in 4..=20 {
                    out.push(BinTParams {
                        z,
                        k,
                        p: 2f64.powi(-jp),
                        q: 2f64.powi(-jq),
                    });
                }
            }
        }
    }
    out
}

pub fn bint_grid_check(grid: &[BinTParams]) -> BinTGridReport {
    let results: Vec<Option<(BinTParams, f64)>> = grid
        .par_iter()
        .map(|prm| {
            prm.precondition()
                .then(|| (*prm, bint_expectation(prm).abs() / prm.bound()))
        })
        .collect();
    let admissible: Vec<(BinTParams, f64)> = results.into_iter().flatten().collect();
    BinTGridReport {
        points: grid.len(),
        admissible: admissible.len(),
        violations: admissible.iter().filter(|(_, r)| *r > 1.0).map(|(p, _)| *p).collect(),
        worst_ratio: admissible.iter().map(|(_, r)| *r).fold(0.0, f64::max),
    }
}

/// Findings of [`krein_rutman_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct KreinRutmanReport {
    pub rho: f64,
    /// Largest modulus among the eigenvalues of the dense matrix of `L`.
    pub rho_dense: f64,
    /// Smallest block eigenvalue of the normalised Perron eigenvector.
    pub eigenvector_min: f64,
    /// Worst relative block eigenvalue of `L(X)` over random PSD `X`.
    pub image_min: f64,
    /// Same for `L*`.
    pub adjoint_image_min: f64,
    pub passed: bool,
}

pub const KR_RHO_TOL: f64 = 1e-8;
pub const KR_PSD_TOL: f64 = 1e-9;
const PSD_PROBES: u64 = 20;

fn random_psd(r: usize, d: usize, rng: &mut impl Rng) -> Vec<CMatrix> {
    (0..d)
        .map(|_| {
            let g = CMatrix::from_fn(r, r, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            &g * g.adjoint()
        })
        .collect()
}

fn relative_min_eig(x: &[CMatrix]) -> f64 {
    let scale = x.iter().map(|m| m.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    min_block_eigenvalue(x) / scale
}

/// Dense cross-check of the Perron structure of `L`: power-iteration
/// radius against the dense spectrum, PSD eigenvector, and positivity of
/// `L` and `L*` on random PSD inputs.
pub fn krein_rutman_check(l: &CPMapL, seed: u64) -> Result<KreinRutmanReport, ProofError> {
    let dim = l.d() * l.r * l.r;
    if dim > MAX_KR_DIM {
        return Err(ProofError::DimensionTooLarge { dim, max: MAX_KR_DIM });
    }
    let cp = cp_radius(l, CP_TOL, CP_MAX_ITER)?;
    let rho_dense = general_eig_dense(&l.dense())?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    // fix the phase so the trace is real and positive, then normalise
    let tr: Complex64 = cp.eigenvector.iter().map(|m| m.trace()).sum();
    let phase = if tr.norm() > 0.0 { tr.conj() / tr.norm() } else { Complex64::new(1.0, 0.0) };
    let scale = cp.eigenvector.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let v: Vec<CMatrix> = cp.eigenvector.iter().map(|m| m * (phase / scale)).collect();
    let eigenvector_min = min_block_eigenvalue(&v);
    let mut rng = rng_from_seed(split_seed(seed, 0));
    let mut image_min = f64::INFINITY;
    let mut adjoint_image_min = f64::INFINITY;
    for _ in 0..PSD_PROBES {
        let x = random_psd(l.r, l.d(), &mut rng);
        image_min = image_min.min(relative_min_eig(&l.apply(&x)));
        adjoint_image_min = adjoint_image_min.min(relative_min_eig(&l.apply_adjoint(&x)));
    }
    let passed = (cp.rho - rho_dense).abs() <= KR_RHO_TOL * rho_dense.max(1.0)
        && eigenvector_min >= -KR_PSD_TOL
        && image_min >= -KR_PSD_TOL
        && adjoint_image_min >= -KR_PSD_TOL;
    Ok(KreinRutmanReport {
        rho: cp.rho,
        rho_dense,
        eigenvector_min,
        image_min,
        adjoint_image_min,
        passed,
    })
}

/// `L` from `d` random blocks with entries uniform in the unit square around 0,
/// paired by the canonical involution with `q` pairs.
pub fn random_cp_map(r: usize, d: usize, q: usize, seed: u64) -> CPMapL {
    let mut rng = rng_from_seed(seed);
    let b: Vec<CMatrix> = (0..d)
        .map(|_| {
            CMatrix::from_fn(r, r, |_, _| {
                Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
            })
        })
        .collect();
    build_l(&b, &crate::model::canonical_star(d, q.min(d / 2)))
}

#[cfg(test)]
fn exact_to_f64(x: &BigRational) -> f64 {
    use num_traits::{Signed, ToPrimitive};
    let sign = if x.is_negative() { -1.0 } else { 1.0 };
    sign * x.abs().to_f64().unwrap_or(f64::INFINITY)
}

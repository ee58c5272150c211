//! Weight systems `(a_0, a_1..a_d, star)` and their random permutation families.

mod io;
mod permutations;

pub use io::{load_weight_system, save_weight_system, weight_system_from_json, weight_system_to_json, WS_FORMAT_VERSION};
pub use permutations::{sample_symmetric, PermutationFamily};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{frobenius, CMat};
use crate::CMatrix;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("vertex index {index} outside 1..={r}")]
    IndexOutOfRange { index: usize, r: usize },
    #[error("matchings require an even ground set, got n = {n}")]
    OddGroundSet { n: usize },
    #[error("invalid sampling request: {0}")]
    InvalidRequest(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid weight system: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// One failed invariant of a [`WeightSystem`]. Generator indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    StarLength { expected: usize, got: usize },
    StarOutOfRange { index: usize, value: usize },
    StarNotInvolution { index: usize },
    WeightCount { expected: usize, got: usize },
    BlockShape { generator: usize, rows: usize, cols: usize },
    NonFinite { generator: usize },
    A0NotHermitian { defect: f64 },
    Symmetry { pair: (usize, usize), defect: f64 },
}

/// Matrix coefficients of `A = a_0 ⊗ 1 + Σ a_i ⊗ S_i`.
///
/// `star` is stored 0-based; generator `0` is `a_1`. `symmetric` requests
/// the adjoint pairing `a_0* = a_0`, `a_i* = a_{star(i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    pub r: usize,
    pub d: usize,
    pub star: Vec<usize>,
    pub a0: CMatrix,
    pub weights: Vec<CMatrix>,
    pub symmetric: bool,
}

/// Canonical involution with `q` free pairs: `i <-> i + q` for `i < q`,
/// fixed points from `2q` on.
pub fn canonical_star(d: usize, q: usize) -> Vec<usize> {
    (0..d)
        .map(|i| {
            if i < q {
                i + q
            } else if i < 2 * q {
                i - q
            } else {
                i
            }
        })
        .collect()
}

impl WeightSystem {
    pub fn new(a0: CMatrix, weights: Vec<CMatrix>, star: Vec<usize>) -> Self {
        Self {
            r: a0.nrows(),
            d: weights.len(),
            star,
            a0,
            weights,
            symmetric: true,
        }
    }

    /// Scalar weights (`r = 1`) with the canonical involution.
    pub fn scalar(a0: f64, weights: &[f64], q: usize) -> Self {
        let one = |x: f64| CMat::from_element(1, 1, Complex64::new(x, 0.0));
        Self::new(
            one(a0),
            weights.iter().map(|&w| one(w)).collect(),
            canonical_star(weights.len(), q),
        )
    }

    /// Unit-weight `d`-regular system: `q = d / 2` free pairs, one matching when `d` is odd.
    pub fn regular(d: usize) -> Self {
        Self::scalar(0.0, &vec![1.0; d], d / 2)
    }

    /// `Some(q)` when `star` is the canonical layout with `q` pairs.
    pub fn canonical_q(&self) -> Option<usize> {
        let q = self
            .star
            .iter()
            .enumerate()
            .filter(|&(i, &s)| s != i)
            .count()
            / 2;
        (self.star == canonical_star(self.d, q)).then_some(q)
    }

    /// `Σ |a_i| + |a_0|` (Frobenius norms); an upper bound on `|A|` and `|A_star|`.
    pub fn norm_bound(&self) -> f64 {
        frobenius(&self.a0) + self.weights.iter().map(frobenius).sum::<f64>()
    }

    pub fn is_valid(&self) -> bool {
        validate(self).is_empty()
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(v))
        }
    }

    /// Same system with a different `a_0`.
    pub fn with_a0(&self, a0: CMatrix) -> Self {
        Self { a0, ..self.clone() }
    }
}

/// Lists every violated invariant; empty iff the system is well formed.
pub fn validate(ws: &WeightSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    if ws.weights.len() != ws.d {
        out.push(Violation::WeightCount {
            expected: ws.d,
            got: ws.weights.len(),
        });
    }
    if ws.star.len() != ws.d {
        out.push(Violation::StarLength {
            expected: ws.d,
            got: ws.star.len(),
        });
        return out;
    }
    let mut star_ok = true;
    for (i, &s) in ws.star.iter().enumerate() {
        if s >= ws.d {
            out.push(Violation::StarOutOfRange {
                index: i + 1,
                value: s + 1,
            });
            star_ok = false;
        }
    }
    if star_ok {
        for i in 0..ws.d {
            if ws.star[ws.star[i]] != i {
                out.push(Violation::StarNotInvolution { index: i + 1 });
                star_ok = false;
            }
        }
    }
    let shapes_ok = std::iter::once(&ws.a0)
        .chain(ws.weights.iter())
        .enumerate()
        .fold(true, |ok, (g, m)| {
            let mut good = true;
            if m.nrows() != ws.r || m.ncols() != ws.r {
                out.push(Violation::BlockShape {
                    generator: g,
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
                good = false;
            }
            if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                out.push(Violation::NonFinite { generator: g });
                good = false;
            }
            ok && good
        });
    if ws.symmetric && shapes_ok && star_ok && ws.weights.len() == ws.d {
        let scale = |m: &CMatrix| SYMMETRY_TOL * frobenius(m).max(1.0);
        let defect = (&ws.a0 - ws.a0.adjoint()).norm();
        if defect > scale(&ws.a0) {
            out.push(Violation::A0NotHermitian { defect });
        }
        for i in 0..ws.d {
            let j = ws.star[i];
            if j < i {
                continue;
            }
            let defect = (ws.weights[i].adjoint() - &ws.weights[j]).norm();
            if defect > scale(&ws.weights[i]) {
                out.push(Violation::Symmetry {
                    pair: (i + 1, j + 1),
                    defect,
                });
            }
        }
    }
    out
}

/// Random symmetric system: `a_i` with entries uniform in the unit square
/// scaled by `1/√r` for `i < star(i)`, `a_{star(i)} = a_i*`, Hermitian
/// blocks on fixed points and for `a_0`. The involution is canonical with `q` pairs.
pub fn random_weight_system(r: usize, d: usize, q: usize, seed: u64) -> Result<WeightSystem, ModelError> {
    if r == 0 || 2 * q > d {
        return Err(ModelError::InvalidRequest(format!("r = {r}, d = {d}, q = {q}")));
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let scale = 1.0 / (r as f64).sqrt();
    let mut draw = || {
        CMat::from_fn(r, r, |_, _| {
            Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0) * scale
        })
    };
    let hermitian = |m: CMatrix| (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let a0 = hermitian(draw());
    let star = canonical_star(d, q);
    let mut weights = vec![CMatrix::zeros(r, r); d];
    for i in 0..d {
        let s = star[i];
        if s == i {
            weights[i] = hermitian(draw());
        } else if i < s {
            weights[i] = draw();
            weights[s] = weights[i].adjoint();
        }
    }
    Ok(WeightSystem::new(a0, weights, star))
}

/// `A_1 = a_0 + Σ a_i`, the action of `A` on `ℂ^r ⊗ 1`.
pub fn base_adjacency(ws: &WeightSystem) -> CMatrix {
    ws.weights.iter().fold(ws.a0.clone(), |acc, a| acc + a)
}

/// An undirected base graph on `r` vertices; each edge `(u, v)` (1-based)
/// becomes the colour pair `a_i = E_uv`, `a_{i*} = E_vu`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseGraphSpec {
    pub r: usize,
    pub edges: Vec<(usize, usize)>,
}

impl BaseGraphSpec {
    /// The 5-vertex, 7-edge base graph used throughout the examples.
    pub fn figure1() -> Self {
        Self {
            r: 5,
            edges: vec![(1, 5), (1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5)],
        }
    }
}

fn unit(r: usize, u: usize, v: usize) -> CMatrix {
    let mut m = CMat::zeros(r, r);
    m[(u, v)] = Complex64::new(1.0, 0.0);
    m
}

pub fn from_base_graph(spec: &BaseGraphSpec) -> Result<WeightSystem, ModelError> {
    let r = spec.r;
    for &(u, v) in &spec.edges {
        for idx in [u, v] {
            if idx == 0 || idx > r {
                return Err(ModelError::IndexOutOfRange { index: idx, r });
            }
        }
    }
    let q = spec.edges.len();
    let forward = spec.edges.iter().map(|&(u, v)| unit(r, u - 1, v - 1));
    let backward = spec.edges.iter().map(|&(u, v)| unit(r, v - 1, u - 1));
    let weights: Vec<CMatrix> = forward.chain(backward).collect();
    Ok(WeightSystem::new(
        CMat::zeros(r, r),
        weights,
        canonical_star(2 * q, q),
    ))
}

/// Named systems shipped with the binary: `figure1` and `regular:<d>`.
pub fn preset(name: &str) -> Result<WeightSystem, ModelError> {
    if name == "figure1" {
        return from_base_graph(&BaseGraphSpec::figure1());
    }
    if let Some(d) = name.strip_prefix("regular:") {
        let d: usize = d
            .parse()
            .map_err(|_| ModelError::UnknownPreset(name.to_string()))?;
        if d == 0 {
            return Err(ModelError::UnknownPreset(name.to_string()));
        }
        return Ok(WeightSystem::regular(d));
    }
    Err(ModelError::UnknownPreset(name.to_string()))
}

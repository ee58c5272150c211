//! The tensor lift `A⁽²⁾ = a_0 ⊗ 1 + Σ a_i ⊗ S_i ⊗ S_i` on `C^r ⊗ C^{n²}`.
//!
//! Layout: `(x * n + y) * r + b`. The trivial subspace is spanned blockwise
//! by the diagonal indicator `I` and the off-diagonal indicator `J`.

use num_complex::Complex64;

use super::lanczos::{lanczos_extremes, LanczosOptions, RitzPair, SymmetricOp};
use super::{block_axpy, block_entries, check_compatible, probe_adjoint_defect, LiftError, ADJOINT_TOL};
use crate::model::{PermutationFamily, WeightSystem};

#[derive(Debug, Clone)]
pub struct TensorLiftOperator {
    ws: WeightSystem,
    pf: PermutationFamily,
    a0: Vec<Complex64>,
    blocks: Vec<Vec<Complex64>>,
}

pub fn build_tensor(ws: &WeightSystem, pf: &PermutationFamily) -> Result<TensorLiftOperator, LiftError> {
    check_compatible(ws, pf)?;
    Ok(TensorLiftOperator {
        a0: block_entries(&ws.a0),
        blocks: ws.weights.iter().map(block_entries).collect(),
        ws: ws.clone(),
        pf: pf.clone(),
    })
}

impl TensorLiftOperator {
    pub fn n(&self) -> usize {
        self.pf.n
    }

    pub fn r(&self) -> usize {
        self.ws.r
    }

    pub fn dim(&self) -> usize {
        self.ws.r * self.pf.n * self.pf.n
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

    fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        let (r, n) = (self.ws.r, self.pf.n);
        if r == 1 {
            let a0 = self.a0[0];
            let w: Vec<Complex64> = self.blocks.iter().map(|b| b[0]).collect();
            for x in 0..n {
                for y in 0..n {
                    let mut acc = a0 * v[x * n + y];
                    for (p, wi) in self.pf.perms.iter().zip(&w) {
                        acc += wi * v[p[x] * n + p[y]];
                    }
                    out[x * n + y] = acc;
                }
            }
            return;
        }
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for x in 0..n {
            for y in 0..n {
                let e = x * n + y;
                let dst = &mut out[e * r..(e + 1) * r];
                block_axpy(&self.a0, &v[e * r..(e + 1) * r], dst);
                for (p, b) in self.pf.perms.iter().zip(&self.blocks) {
                    let f = p[x] * n + p[y];
                    block_axpy(b, &v[f * r..(f + 1) * r], dst);
                }
            }
        }
    }

    /// Orthogonal projection onto `C^r ⊗ span{I, J}^⊥`.
    pub fn project(&self, v: &mut [Complex64]) {
        let (r, n) = (self.ws.r, self.pf.n);
        if n < 2 {
            v.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            return;
        }
        for b in 0..r {
            let mut diag = Complex64::new(0.0, 0.0);
            let mut off = Complex64::new(0.0, 0.0);
            for x in 0..n {
                for y in 0..n {
                    let z = v[(x * n + y) * r + b];
                    if x == y {
                        diag += z;
                    } else {
                        off += z;
                    }
                }
            }
            diag /= n as f64;
            off /= (n * (n - 1)) as f64;
            for x in 0..n {
                for y in 0..n {
                    v[(x * n + y) * r + b] -= if x == y { diag } else { off };
                }
            }
        }
    }
}

impl SymmetricOp for TensorLiftOperator {
    fn dim(&self) -> usize {
        TensorLiftOperator::dim(self)
    }
    fn subspace_dim(&self) -> usize {
        let n = self.pf.n;
        self.ws.r * (n * n).saturating_sub(2)
    }
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        self.apply_into(v, out);
    }
    fn project(&self, v: &mut [Complex64]) {
        TensorLiftOperator::project(self, v);
    }
}

/// Extreme eigenvalues of `A⁽²⁾` on `H_0⁽²⁾`, as `(smallest, largest)`.
pub fn extreme_eigs_h0_tensor(
    op: &TensorLiftOperator,
    opts: &LanczosOptions,
) -> Result<(Vec<RitzPair>, Vec<RitzPair>), LiftError> {
    let defect = probe_adjoint_defect(op.dim(), |v, o| op.apply_into(v, o), 0x7e50_0a0d);
    if !op.ws.symmetric || defect > ADJOINT_TOL {
        return Err(LiftError::NotSelfAdjoint { defect });
    }
    lanczos_extremes(op, opts)
}

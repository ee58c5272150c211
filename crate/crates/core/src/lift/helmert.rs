//! The Helmert basis of `1^⊥ ⊂ C^n`, applied blockwise in O(n r).
//!
//! Column `k` (1-based, `1 <= k < n`) is `(1, ..., 1, -k, 0, ..., 0) / sqrt(k(k+1))`
//! with `k` leading ones.

use num_complex::Complex64;

fn scale(k: usize) -> f64 {
    1.0 / ((k * (k + 1)) as f64).sqrt()
}

/// `out = (Q ⊗ Id_r) c` for `c` of length `r(n-1)`; `out` has length `rn`.
pub fn helmert_apply(c: &[Complex64], r: usize, out: &mut [Complex64]) {
    let n = out.len() / r;
    debug_assert_eq!(c.len(), r * (n - 1));
    for b in 0..r {
        // suffix sum of c_k / sqrt(k(k+1)) over k > x
        let mut tail = Complex64::new(0.0, 0.0);
        for x in (0..n).rev() {
            let own = if x >= 1 {
                c[(x - 1) * r + b] * (x as f64 * scale(x))
            } else {
                Complex64::new(0.0, 0.0)
            };
            out[x * r + b] = tail - own;
            if x >= 1 {
                tail += c[(x - 1) * r + b] * scale(x);
            }
        }
    }
}

/// `out = (Q ⊗ Id_r)^* v` for `v` of length `rn`.
pub fn helmert_apply_adjoint(v: &[Complex64], r: usize, out: &mut [Complex64]) {
    let n = v.len() / r;
    debug_assert_eq!(out.len(), r * (n - 1));
    for b in 0..r {
        let mut head = Complex64::new(0.0, 0.0);
        for k in 1..n {
            head += v[(k - 1) * r + b];
            out[(k - 1) * r + b] = (head - v[k * r + b] * k as f64) * scale(k);
        }
    }
}

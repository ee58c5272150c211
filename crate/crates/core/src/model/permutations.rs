use rand::Rng;

use super::ModelError;
use crate::rng::rng_from_seed;

/// `d` permutations of `[n]` in the canonical layout: `perms[i + q]` is the
/// inverse of `perms[i]` for `i < q`, and `perms[i]` for `i >= 2q` is a
/// fixed-point-free involution. Entries are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationFamily {
    pub n: usize,
    pub q: usize,
    pub perms: Vec<Vec<usize>>,
}

impl PermutationFamily {
    pub fn d(&self) -> usize {
        self.perms.len()
    }

    /// Checks every structural invariant, returning a description of the first failure.
    pub fn check(&self) -> Result<(), String> {
        let n = self.n;
        for (i, p) in self.perms.iter().enumerate() {
            if p.len() != n {
                return Err(format!("perm {i} has length {}", p.len()));
            }
            let mut seen = vec![false; n];
            for &y in p {
                if y >= n || seen[y] {
                    return Err(format!("perm {i} is not a bijection"));
                }
                seen[y] = true;
            }
        }
        let d = self.d();
        if 2 * self.q > d {
            return Err(format!("q = {} exceeds d / 2", self.q));
        }
        for i in 0..self.q {
            let (p, inv) = (&self.perms[i], &self.perms[i + self.q]);
            if (0..n).any(|x| inv[p[x]] != x) {
                return Err(format!("perm {} is not the inverse of perm {i}", i + self.q));
            }
        }
        for (i, p) in self.perms.iter().enumerate().skip(2 * self.q) {
            if (0..n).any(|x| p[x] == x || p[p[x]] != x) {
                return Err(format!("perm {i} is not a fixed-point-free involution"));
            }
        }
        Ok(())
    }

    /// Builds a family from explicit permutations, checking invariants.
    pub fn from_perms(n: usize, q: usize, perms: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        let pf = Self { n, q, perms };
        pf.check().map_err(ModelError::InvalidRequest)?;
        Ok(pf)
    }
}

fn shuffled<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    // Fisher–Yates, written out so the draw sequence is pinned to this code
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (x, &y) in p.iter().enumerate() {
        inv[y] = x;
    }
    inv
}

/// Uniform symmetric family: `q` independent uniform permutations with their
/// inverses, then `d - 2q` independent uniform perfect matchings.
pub fn sample_symmetric(n: usize, q: usize, d: usize, seed: u64) -> Result<PermutationFamily, ModelError> {
    if 2 * q > d {
        return Err(ModelError::InvalidRequest(format!("2q = {} exceeds d = {d}", 2 * q)));
    }
    if n < 2 {
        return Err(ModelError::InvalidRequest(format!("n = {n} must be at least 2")));
    }
    if 2 * q < d && n % 2 == 1 {
        return Err(ModelError::OddGroundSet { n });
    }
    let mut rng = rng_from_seed(seed);
    let mut perms = vec![Vec::new(); d];
    for i in 0..q {
        let p = shuffled(n, &mut rng);
        perms[i + q] = inverse(&p);
        perms[i] = p;
    }
    for slot in perms.iter_mut().skip(2 * q) {
        // shuffle, then pair consecutive elements
        let order = shuffled(n, &mut rng);
        let mut m = vec![0; n];
        for pair in order.chunks_exact(2) {
            m[pair[0]] = pair[1];
            m[pair[1]] = pair[0];
        }
        *slot = m;
    }
    Ok(PermutationFamily { n, q, perms })
}

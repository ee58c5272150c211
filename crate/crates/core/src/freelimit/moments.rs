//! Moments `τ(A★^k)` on a truncated ball of the free-product Cayley tree.

use num_complex::Complex64;
use std::collections::HashMap;

use super::FreeLimitError;
use crate::lift::{block_axpy, block_entries};
use crate::model::WeightSystem;

pub const MAX_MOMENT_ORDER: usize = 16;
/// Cap on `r × (vertex count)` of the truncated ball.
pub const MAX_BALL_DIM: usize = 4_000_000;

/// Reduced words of length `<= depth`, as parent/letter arrays; vertex 0 is the root.
struct Ball {
    /// `next[v][i]`: vertex `v · g_i`, if it lies in the ball.
    next: Vec<Vec<Option<usize>>>,
}

fn ball_size(d: usize, depth: usize) -> Option<usize> {
    let mut total: usize = 1;
    let mut layer: usize = 1;
    for t in 0..depth {
        // layer t has d (d-1)^{t-1} words when every generator has its own inverse pair;
        // matchings have the same count because g_i^2 = e also removes one continuation
        layer = layer.checked_mul(if t == 0 { d } else { d.saturating_sub(1) })?;
        total = total.checked_add(layer)?;
    }
    Some(total)
}

impl Ball {
    fn new(star: &[usize], depth: usize) -> Self {
        let d = star.len();
        let mut words: Vec<(usize, Option<usize>, usize)> = vec![(0, None, 0)]; // (parent, last letter, length)
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut fresh = Vec::new();
            for &v in &frontier {
                let last = words[v].1;
                for i in 0..d {
                    if last.is_some_and(|l| star[l] == i) {
                        continue;
                    }
                    let id = words.len();
                    words.push((v, Some(i), words[v].2 + 1));
                    index.insert((v, i), id);
                    fresh.push(id);
                }
            }
            frontier = fresh;
        }
        let next = (0..words.len())
            .map(|v| {
                (0..d)
                    .map(|i| match words[v].1 {
                        // w = u · g_l and i = l★: the product reduces to u
                        Some(l) if star[l] == i => Some(words[v].0),
                        _ => index.get(&(v, i)).copied(),
                    })
                    .collect()
            })
            .collect();
        Ball { next }
    }
}

/// `τ(A★^k) = (1/r) Σ_b <e_b ⊗ δ_e, A★^k e_b ⊗ δ_e>`.
///
/// Closed walks of length `k` from the root never leave the ball of depth
/// `⌈k/2⌉`, so the truncated operator gives the exact value.
pub fn free_moment(ws: &WeightSystem, k: usize) -> Result<f64, FreeLimitError> {
    Ok(free_moment_complex(ws, k)?.re)
}

pub fn free_moment_complex(ws: &WeightSystem, k: usize) -> Result<Complex64, FreeLimitError> {
    let depth = k.div_ceil(2);
    let r = ws.r;
    let size = ball_size(ws.d, depth).filter(|s| s.saturating_mul(r) <= MAX_BALL_DIM);
    if k > MAX_MOMENT_ORDER || size.is_none() {
        return Err(FreeLimitError::DepthTooLarge {
            k,
            max: MAX_MOMENT_ORDER,
        });
    }
    let ball = Ball::new(&ws.star, depth);
    let nv = ball.next.len();
    let a0 = block_entries(&ws.a0);
    let blocks: Vec<Vec<Complex64>> = ws.weights.iter().map(block_entries).collect();
    let mut total = Complex64::new(0.0, 0.0);
    for b in 0..r {
        let mut v = vec![Complex64::new(0.0, 0.0); nv * r];
        v[b] = Complex64::new(1.0, 0.0);
        for _ in 0..k {
            let mut out = vec![Complex64::new(0.0, 0.0); nv * r];
            for w in 0..nv {
                let dst = &mut out[w * r..(w + 1) * r];
                block_axpy(&a0, &v[w * r..(w + 1) * r], dst);
                for (i, blk) in blocks.iter().enumerate() {
                    if let Some(u) = ball.next[w][i] {
                        block_axpy(blk, &v[u * r..(u + 1) * r], dst);
                    }
                }
            }
            v = out;
        }
        total += v[b];
    }
    Ok(total / r as f64)
}

//! Colored graphs `G^σ`, balls, short cycles, tangles and local moments.
//!
//! Vertices are 0-based here and 1-based in the text export.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::lift::{block_axpy, block_entries, LiftOperator};
use crate::model::{canonical_star, PermutationFamily};

/// Longest cycle length accepted by [`count_cycles`].
pub const MAX_CYCLE_LENGTH: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {vertex} outside 0..{n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("cycle length {ell} outside 1..={max}")]
    CycleLength { ell: usize, max: usize },
    #[error("tangle radius must be at least 1")]
    ZeroRadius,
}

/// A colored edge `[x, i, y]`, stored as the smaller of `(x, i, y)` and `(y, i★, x)`.
pub type ColoredEdge = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoredGraph {
    pub n: usize,
    pub star: Vec<usize>,
    pub vertices: BTreeSet<usize>,
    pub edges: BTreeSet<ColoredEdge>,
}

impl ColoredGraph {
    pub fn d(&self) -> usize {
        self.star.len()
    }

    pub fn canonical(&self, x: usize, i: usize, y: usize) -> ColoredEdge {
        (x, i, y).min((y, self.star[i], x))
    }

    pub fn contains(&self, x: usize, i: usize, y: usize) -> bool {
        self.edges.contains(&self.canonical(x, i, y))
    }

    /// Oriented half-edges `(neighbour, edge)` out of every vertex.
    fn adjacency(&self) -> HashMap<usize, Vec<(usize, ColoredEdge)>> {
        let mut adj: HashMap<usize, Vec<(usize, ColoredEdge)>> = HashMap::new();
        for &e in &self.edges {
            let (x, i, y) = e;
            adj.entry(x).or_default().push((y, e));
            // a loop [x, i, x] with i = i★ has a single orientation
            if !(x == y && self.star[i] == i) {
                adj.entry(y).or_default().push((x, e));
            }
        }
        adj
    }
}

/// `G^σ`: an edge `[x, i, σ_i(x)]` for every `x` and `i`.
pub fn build_colored_graph(pf: &PermutationFamily) -> ColoredGraph {
    let star = canonical_star(pf.d(), pf.q);
    let mut g = ColoredGraph {
        n: pf.n,
        star,
        vertices: (0..pf.n).collect(),
        edges: BTreeSet::new(),
    };
    for (i, p) in pf.perms.iter().enumerate() {
        for (x, &y) in p.iter().enumerate() {
            let e = g.canonical(x, i, y);
            g.edges.insert(e);
        }
    }
    g
}

/// Graph distances from `x`, up to `h`.
fn distances(
    adj: &HashMap<usize, Vec<(usize, ColoredEdge)>>,
    x: usize,
    h: usize,
) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(x, 0)]);
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du == h {
            continue;
        }
        for &(v, _) in adj.get(&u).map_or(&[][..], |a| a.as_slice()) {
            if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(v) {
                slot.insert(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// `(G, x)_h`: the edges on some path of length at most `h` from `x`, i.e.
/// those with an endpoint at distance below `h`.
pub fn ball(g: &ColoredGraph, x: usize, h: usize) -> Result<ColoredGraph, GraphError> {
    if !g.vertices.contains(&x) {
        return Err(GraphError::VertexOutOfRange { vertex: x, n: g.n });
    }
    Ok(ball_with(g, &g.adjacency(), x, h))
}

fn ball_with(
    g: &ColoredGraph,
    adj: &HashMap<usize, Vec<(usize, ColoredEdge)>>,
    x: usize,
    h: usize,
) -> ColoredGraph {
    let mut out = ColoredGraph {
        n: g.n,
        star: g.star.clone(),
        vertices: BTreeSet::from([x]),
        edges: BTreeSet::new(),
    };
    if h == 0 {
        return out;
    }
    for (&u, &du) in &distances(adj, x, h) {
        if du < h {
            for &(v, e) in &adj[&u] {
                out.vertices.insert(v);
                out.edges.insert(e);
            }
        }
    }
    out.vertices.insert(x);
    out
}

/// Number of distinct cycles of length `ell`: edge sets of closed paths
/// with distinct vertices and distinct edges. Loops are cycles of length 1,
/// doubled edges cycles of length 2.
pub fn count_cycles(g: &ColoredGraph, ell: usize) -> Result<usize, GraphError> {
    if ell == 0 || ell > MAX_CYCLE_LENGTH {
        return Err(GraphError::CycleLength {
            ell,
            max: MAX_CYCLE_LENGTH,
        });
    }
    let adj = g.adjacency();
    let mut seen: HashSet<Vec<ColoredEdge>> = HashSet::new();
    // each cycle is found from its smallest vertex
    for &s in &g.vertices {
        let mut path_vertices = vec![s];
        let mut path_edges: Vec<ColoredEdge> = Vec::new();
        walk(&adj, s, ell, &mut path_vertices, &mut path_edges, &mut seen);
    }
    Ok(seen.len())
}

fn walk(
    adj: &HashMap<usize, Vec<(usize, ColoredEdge)>>,
    s: usize,
    ell: usize,
    vertices: &mut Vec<usize>,
    edges: &mut Vec<ColoredEdge>,
    seen: &mut HashSet<Vec<ColoredEdge>>,
) {
    let u = *vertices.last().expect("path starts at s");
    let Some(out) = adj.get(&u) else { return };
    for &(v, e) in out {
        if edges.contains(&e) {
            continue;
        }
        if edges.len() + 1 == ell {
            if v == s {
                let mut key = edges.clone();
                key.push(e);
                key.sort_unstable();
                seen.insert(key);
            }
        } else if v > s && !vertices.contains(&v) {
            vertices.push(v);
            edges.push(e);
            walk(adj, s, ell, vertices, edges, seen);
            vertices.pop();
            edges.pop();
        }
    }
}

/// `true` when every ball `(G, x)_ell` has at most one cycle (`|E| ≤ |V|`,
/// balls being connected).
pub fn is_tangle_free(g: &ColoredGraph, ell: usize) -> Result<bool, GraphError> {
    if ell == 0 {
        return Err(GraphError::ZeroRadius);
    }
    let adj = g.adjacency();
    Ok(g
        .vertices
        .par_iter()
        .all(|&x| {
            let b = ball_with(g, &adj, x, ell);
            b.edges.len() <= b.vertices.len()
        }))
}

/// `τ_x(A^k) = (1/r) Σ_b <e_b ⊗ δ_x, A^k e_b ⊗ δ_x>` for `k = 0..=k_max`,
/// propagating on the support only.
pub fn local_moments(op: &LiftOperator, x: usize, k_max: usize) -> Result<Vec<f64>, GraphError> {
    let (n, r) = (op.n(), op.r());
    if x >= n {
        return Err(GraphError::VertexOutOfRange { vertex: x, n });
    }
    let ws = op.weight_system();
    let pf = op.family();
    let a0 = block_entries(&ws.a0);
    let blocks: Vec<Vec<Complex64>> = ws.weights.iter().map(block_entries).collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut sums = vec![zero; k_max + 1];
    for b in 0..r {
        let mut v: HashMap<usize, Vec<Complex64>> = HashMap::new();
        let mut e = vec![zero; r];
        e[b] = Complex64::new(1.0, 0.0);
        v.insert(x, e);
        sums[0] += Complex64::new(1.0, 0.0);
        for k in 1..=k_max {
            // (Av)(y) = a_0 v(y) + Σ_i a_i v(σ_i y); y ranges over the support and its σ_{i★} images
            let mut support: BTreeSet<usize> = v.keys().copied().collect();
            for &z in v.keys() {
                for (i, _) in blocks.iter().enumerate() {
                    support.insert(pf.perms[ws.star[i]][z]);
                }
            }
            let mut next = HashMap::with_capacity(support.len());
            for y in support {
                let mut acc = vec![zero; r];
                if let Some(vy) = v.get(&y) {
                    block_axpy(&a0, vy, &mut acc);
                }
                for (i, blk) in blocks.iter().enumerate() {
                    if let Some(vz) = v.get(&pf.perms[i][y]) {
                        block_axpy(blk, vz, &mut acc);
                    }
                }
                next.insert(y, acc);
            }
            v = next;
            if let Some(vx) = v.get(&x) {
                sums[k] += vx[b];
            }
        }
    }
    Ok(sums.iter().map(|s| s.re / r as f64).collect())
}

pub fn local_moment(op: &LiftOperator, x: usize, k: usize) -> Result<f64, GraphError> {
    Ok(local_moments(op, x, k)?[k])
}

/// Text export: a header `n <n> d <d>`, then one canonical edge `x i y` per line (1-based).
pub fn write_edge_list<W: Write>(g: &ColoredGraph, mut out: W) -> std::io::Result<()> {
    writeln!(out, "n {} d {}", g.n, g.d())?;
    for &(x, i, y) in &g.edges {
        writeln!(out, "{} {} {}", x + 1, i + 1, y + 1)?;
    }
    Ok(())
}

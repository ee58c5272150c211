//! Finite spectra and unions of closed intervals, with exact Hausdorff distance.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("Hausdorff distance of an empty set")]
pub struct EmptySet;

/// A compact subset of the real line.
///
/// `Finite` keeps multiplicities (a sorted eigenvalue multiset). `Union`
/// holds disjoint sorted closed intervals plus isolated points that are not
/// inside any interval.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralSet<T = f64> {
    Finite(Vec<T>),
    Union { intervals: Vec<(T, T)>, points: Vec<T> },
}

fn sort<T: Float>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite spectrum"));
}

impl<T: Float> SpectralSet<T> {
    pub fn finite(mut values: Vec<T>) -> Self {
        sort(&mut values);
        SpectralSet::Finite(values)
    }

    /// Normalising constructor: merges overlapping intervals and absorbs
    /// points that fall inside an interval.
    pub fn union(intervals: Vec<(T, T)>, points: Vec<T>) -> Self {
        let mut ivs: Vec<(T, T)> = intervals
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        ivs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite endpoints"));
        let mut merged: Vec<(T, T)> = Vec::with_capacity(ivs.len());
        for (a, b) in ivs {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let mut pts: Vec<T> = points
            .into_iter()
            .filter(|p| !merged.iter().any(|&(a, b)| a <= *p && *p <= b))
            .collect();
        sort(&mut pts);
        pts.dedup();
        SpectralSet::Union {
            intervals: merged,
            points: pts,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            SpectralSet::Finite(v) => v.is_empty(),
            SpectralSet::Union { intervals, points } => intervals.is_empty() && points.is_empty(),
        }
    }

    /// Connected components as sorted closed intervals (points are degenerate intervals).
    pub fn components(&self) -> Vec<(T, T)> {
        let mut c: Vec<(T, T)> = match self {
            SpectralSet::Finite(v) => v.iter().map(|&x| (x, x)).collect(),
            SpectralSet::Union { intervals, points } => intervals
                .iter()
                .copied()
                .chain(points.iter().map(|&p| (p, p)))
                .collect(),
        };
        c.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite endpoints"));
        c
    }

    pub fn min(&self) -> Option<T> {
        self.components().first().map(|c| c.0)
    }

    pub fn max(&self) -> Option<T> {
        self.components().iter().map(|c| c.1).fold(None, |m, x| {
            Some(match m {
                Some(y) if y >= x => y,
                _ => x,
            })
        })
    }

    pub fn distance_to(&self, x: T) -> T {
        distance_to_components(&self.components(), x)
    }

    /// Number of entries (or components) lying farther than `eps` from `other`.
    pub fn count_outside(&self, other: &SpectralSet<T>, eps: T) -> usize {
        let comps = other.components();
        match self {
            SpectralSet::Finite(v) => v
                .iter()
                .filter(|&&x| distance_to_components(&comps, x) > eps)
                .count(),
            SpectralSet::Union { .. } => self
                .components()
                .iter()
                .filter(|c| directed_component(**c, &comps) > eps)
                .count(),
        }
    }
}

fn distance_to_components<T: Float>(comps: &[(T, T)], x: T) -> T {
    comps.iter().fold(T::infinity(), |best, &(a, b)| {
        let d = if x < a {
            a - x
        } else if x > b {
            x - b
        } else {
            T::zero()
        };
        best.min(d)
    })
}

/// `sup_{s in [lo, hi]} dist(s, comps)`. The distance function is piecewise
/// linear with local maxima only at the gap midpoints of `comps`, so it is
/// enough to look at the endpoints and those midpoints.
fn directed_component<T: Float>((lo, hi): (T, T), comps: &[(T, T)]) -> T {
    let two = T::one() + T::one();
    let mut best = distance_to_components(comps, lo).max(distance_to_components(comps, hi));
    for w in comps.windows(2) {
        let mid = (w[0].1 + w[1].0) / two;
        if lo <= mid && mid <= hi {
            best = best.max(distance_to_components(comps, mid));
        }
    }
    best
}

/// `sup_{s in S} dist(s, T)`.
pub fn directed_hausdorff<T: Float>(s: &SpectralSet<T>, t: &SpectralSet<T>) -> Result<T, EmptySet> {
    if s.is_empty() || t.is_empty() {
        return Err(EmptySet);
    }
    let tc = t.components();
    Ok(s.components()
        .into_iter()
        .map(|c| directed_component(c, &tc))
        .fold(T::zero(), T::max))
}

/// Exact Hausdorff distance between two compact subsets of the line.
pub fn hausdorff<T: Float>(s: &SpectralSet<T>, t: &SpectralSet<T>) -> Result<T, EmptySet> {
    Ok(directed_hausdorff(s, t)?.max(directed_hausdorff(t, s)?))
}

/// JSON shape of a spectral set: `{"intervals": [[lo, hi], ...], "points": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSetJson {
    pub intervals: Vec<[f64; 2]>,
    pub points: Vec<f64>,
}

impl From<&SpectralSet<f64>> for SpectralSetJson {
    fn from(s: &SpectralSet<f64>) -> Self {
        match s {
            SpectralSet::Finite(v) => Self {
                intervals: Vec::new(),
                points: v.clone(),
            },
            SpectralSet::Union { intervals, points } => Self {
                intervals: intervals.iter().map(|&(a, b)| [a, b]).collect(),
                points: points.clone(),
            },
        }
    }
}

impl From<SpectralSetJson> for SpectralSet<f64> {
    fn from(j: SpectralSetJson) -> Self {
        SpectralSet::union(j.intervals.into_iter().map(|[a, b]| (a, b)).collect(), j.points)
    }
}

impl SpectralSet<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpectralSetJson::from(self)).expect("spectral set serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force on a grid of step `h`; agrees with the exact value up to `h`.
    fn grid_hausdorff(s: &SpectralSet, t: &SpectralSet, h: f64) -> f64 {
        let sample = |set: &SpectralSet| -> Vec<f64> {
            set.components()
                .iter()
                .flat_map(|&(a, b)| {
                    let steps = ((b - a) / h).ceil() as usize;
                    (0..=steps).map(move |k| (a + k as f64 * h).min(b))
                })
                .collect()
        };
        let directed = |x: &[f64], y: &[f64]| {
            x.iter()
                .map(|p| y.iter().map(|q| (p - q).abs()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        let (xs, ys) = (sample(s), sample(t));
        directed(&xs, &ys).max(directed(&ys, &xs))
    }

    #[test]
    fn identical_sets() {
        let s = SpectralSet::union(vec![(-1.0, 1.0)], vec![3.0]);
        assert_eq!(hausdorff(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn point_to_interval() {
        let s = SpectralSet::finite(vec![0.0]);
        let t = SpectralSet::union(vec![(1.0, 2.0)], vec![]);
        assert_eq!(hausdorff(&s, &t).unwrap(), 2.0);
        assert_eq!(directed_hausdorff(&s, &t).unwrap(), 1.0);
    }

    #[test]
    fn three_points_against_interval() {
        // the interval side dominates: 1.5 sits halfway between 0 and 3
        let s = SpectralSet::finite(vec![-3.0, 0.0, 3.0]);
        let t = SpectralSet::union(vec![(-2.0, 2.0)], vec![]);
        let exact = hausdorff(&s, &t).unwrap();
        assert!((exact - 1.5).abs() < 1e-15);
        assert!((grid_hausdorff(&s, &t, 1e-3) - exact).abs() <= 1e-3);
        assert_eq!(directed_hausdorff(&s, &t).unwrap(), 1.0);
    }

    #[test]
    fn empty_is_error() {
        let e: SpectralSet = SpectralSet::finite(vec![]);
        assert_eq!(hausdorff(&e, &SpectralSet::finite(vec![1.0])), Err(EmptySet));
    }

    #[test]
    fn union_normalises() {
        let s = SpectralSet::union(vec![(2.0, 3.0), (0.0, 1.0), (0.5, 2.5)], vec![0.7, 5.0, 5.0]);
        assert_eq!(
            s,
            SpectralSet::Union {
                intervals: vec![(0.0, 3.0)],
                points: vec![5.0]
            }
        );
        let json = s.to_json();
        let back: SpectralSet = serde_json::from_str::<SpectralSetJson>(&json).unwrap().into();
        assert_eq!(back, s);
    }

    #[test]
    fn single_precision() {
        let s = SpectralSet::<f32>::finite(vec![0.0, 1.0]);
        let t = SpectralSet::<f32>::union(vec![(0.0, 1.0)], vec![]);
        assert!((hausdorff(&s, &t).unwrap() - 0.5).abs() < 1e-7);
    }

    fn arb_set() -> impl Strategy<Value = SpectralSet> {
        (
            prop::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 0..3),
            prop::collection::vec(-6.0f64..6.0, 0..4),
        )
            .prop_filter_map("nonempty", |(ivs, pts)| {
                let s = SpectralSet::union(ivs.into_iter().map(|(a, w)| (a, a + w)).collect(), pts);
                (!s.is_empty()).then_some(s)
            })
    }

    proptest! {
        #[test]
        fn exact_matches_grid(s in arb_set(), t in arb_set()) {
            let exact = hausdorff(&s, &t).unwrap();
            let approx = grid_hausdorff(&s, &t, 1e-2);
            prop_assert!((exact - approx).abs() <= 1e-2 + 1e-12, "{} vs {}", exact, approx);
            prop_assert_eq!(exact, hausdorff(&t, &s).unwrap());
        }
    }
}

//! Neighbor selection, affinity construction and symmetric normalization.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::config::{DistanceMode, Mode, PmlpConfig};
use crate::density::{nearest_rows, path_density_info};
use crate::distance::distance;
use crate::error::{Error, Result};
use crate::types::{AffinityMatrix, FeatureMatrix};

/// Floor applied to Euclidean distances before inversion.
pub const DIST_EPS: f64 = 1e-12;

/// The nearest rows to `center`, ascending by distance, ties by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub center: usize,
    pub neighbors: Vec<(usize, f64)>,
}

impl NeighborSet {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.neighbors.iter().map(|&(r, _)| r)
    }
}

pub fn knn_select(features: &FeatureMatrix, center: usize, count: usize) -> Result<NeighborSet> {
    let c = features.checked_row(center)?;
    if count >= features.rows() {
        return Err(Error::CountTooLarge {
            requested: count,
            available: features.rows() - 1,
        });
    }
    let rows = nearest_rows(features, c, count, Some(center))?;
    let neighbors = rows
        .into_iter()
        .map(|r| {
            let d = distance(c, features.row(r), DistanceMode::EuclideanInverse)?;
            Ok((r, d))
        })
        .collect::<Result<_>>()?;
    Ok(NeighborSet { center, neighbors })
}

/// D-derived part of the affinity: 1/max(d, ε) for Euclidean, the similarity
/// clamped at zero otherwise.
pub fn base_affinity(features: &FeatureMatrix, i: usize, j: usize, mode: DistanceMode) -> Result<f64> {
    let d = distance(features.checked_row(i)?, features.checked_row(j)?, mode)?;
    Ok(match mode {
        DistanceMode::EuclideanInverse => 1.0 / d.max(DIST_EPS),
        DistanceMode::CosineSimilarity | DistanceMode::FirstOrderSimilarity => d.max(0.0),
    })
}

/// Affinity of one pair: the base affinity, times I(p) in PMLP mode.
pub fn pair_affinity(features: &FeatureMatrix, i: usize, j: usize, cfg: &PmlpConfig) -> Result<f64> {
    let base = base_affinity(features, i, j, cfg.distance_mode)?;
    match cfg.mode {
        Mode::ClassicalLpa => Ok(base),
        Mode::Pmlp => Ok(base * path_density_info(features, i, j, cfg)?),
    }
}

fn check_node_set(features: &FeatureMatrix, node_set: &[usize]) -> Result<()> {
    let mut seen = HashSet::with_capacity(node_set.len());
    for &r in node_set {
        features.checked_row(r)?;
        if !seen.insert(r) {
            return Err(Error::DuplicateNode(r));
        }
    }
    if node_set.len() < 2 {
        return Err(Error::Degenerate("node set needs at least 2 rows".into()));
    }
    Ok(())
}

/// Fills the listed (a, b) positions of an m x m matrix with pair
/// affinities, in parallel. Positions refer to `node_set`.
fn fill_pairs(
    features: &FeatureMatrix,
    node_set: &[usize],
    pairs: &[(usize, usize)],
    cfg: &PmlpConfig,
) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|&(a, b)| pair_affinity(features, node_set[a], node_set[b], cfg))
        .collect()
}

/// Dense affinity over every pair of `node_set`. Matrix position `a`
/// corresponds to row `node_set[a]`; density supports come from the whole
/// feature matrix.
pub fn build_affinity(features: &FeatureMatrix, node_set: &[usize], cfg: &PmlpConfig) -> Result<AffinityMatrix> {
    check_node_set(features, node_set)?;
    let m = node_set.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| ((a + 1)..m).map(move |b| (a, b))).collect();
    let values = fill_pairs(features, node_set, &pairs, cfg)?;
    let mut raw = Array2::zeros((m, m));
    for (&(a, b), v) in pairs.iter().zip(values) {
        raw[[a, b]] = v;
        raw[[b, a]] = v;
    }
    AffinityMatrix::symmetrized(raw)
}

/// Sparsified affinity: position `a` keeps edges only to its
/// `neighbor_count` nearest members of `node_set`, then the result is
/// symmetrized as (M + Mᵀ)/2. With `neighbor_count = m - 1` this equals
/// [`build_affinity`].
pub fn build_knn_affinity(
    features: &FeatureMatrix,
    node_set: &[usize],
    neighbor_count: usize,
    cfg: &PmlpConfig,
) -> Result<AffinityMatrix> {
    check_node_set(features, node_set)?;
    let m = node_set.len();
    let local = features.select(node_set)?;
    let knn: Vec<NeighborSet> = (0..m)
        .into_par_iter()
        .map(|a| knn_select(&local, a, neighbor_count))
        .collect::<Result<_>>()?;

    let mut pairs: Vec<(usize, usize)> = knn
        .iter()
        .flat_map(|ns| ns.indices().map(move |b| (ns.center.min(b), ns.center.max(b))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let values = fill_pairs(features, node_set, &pairs, cfg)?;
    let lookup: std::collections::HashMap<(usize, usize), f64> = pairs.into_iter().zip(values).collect();

    let mut raw = Array2::zeros((m, m));
    for ns in &knn {
        let a = ns.center;
        for b in ns.indices() {
            raw[[a, b]] = lookup[&(a.min(b), a.max(b))];
        }
    }
    AffinityMatrix::symmetrized(raw)
}

/// S = D^{-1/2} W D^{-1/2}, where D holds the row sums of W.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAffinity {
    data: Array2<f64>,
}

impl NormalizedAffinity {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    /// Wraps an arbitrary square matrix; meant for tests and for callers
    /// that already hold a normalized operator (e.g. the zero matrix).
    pub fn from_raw(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::ShapeMismatch(format!("operator is {r} x {c}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalized affinity"));
        }
        Ok(Self { data })
    }
}

pub fn normalize_symmetric(w: &AffinityMatrix) -> Result<NormalizedAffinity> {
    let deg = w.degrees();
    if let Some(row) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(row));
    }
    let n = w.size();
    let wv = w.view();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = wv[[i, j]];
            if v != 0.0 {
                s[[i, j]] = v / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    NormalizedAffinity::from_raw(s)
}

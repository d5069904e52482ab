//! Path sampling, exponential-kernel density estimates along the segment
//! joining two features, and the aggregate density weight I(p) of a pair.
//!
//! For a pair (i, j) the segment x_i → x_j is cut into k + 1 equal pieces and
//! the k interior points are kept (k = 1 gives the midpoint). Each point's
//! density is estimated from its n nearest rows with
//!
//! ```text
//! p(q)  = 1/(n·h) · Σ_m exp(-‖s_m − q‖² / h)      raw estimate
//! p'(q) = 1/n     · Σ_m exp(-‖s_m − q‖² / h)      normalized, in (0, 1]
//! ```
//!
//! The affinity uses p'. Dropping the 1/h factor multiplies every density by
//! the same constant, which normalized propagation cancels exactly; p' also
//! tends to 1 as h grows, which is what makes large-bandwidth runs collapse
//! onto classical label propagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::config::{Aggregator, PmlpConfig};
use crate::distance::squared_euclidean;
use crate::error::{Error, Result};
use crate::types::FeatureMatrix;

/// The k interior equal-division points between rows i and j.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub endpoints: (usize, usize),
    /// k x d, one point per row.
    pub points: Array2<f64>,
}

/// Densities at the points of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDensities(pub Vec<f64>);

impl PathDensities {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn sample_path(features: &FeatureMatrix, i: usize, j: usize, k: usize) -> Result<PathSample> {
    let xi = features.checked_row(i)?;
    let xj = features.checked_row(j)?;
    if i == j {
        return Err(Error::IdenticalEndpoints(i));
    }
    if k == 0 {
        return Err(Error::Empty("path needs at least one sample point"));
    }
    let diff = &xj - &xi;
    let denom = (k + 1) as f64;
    let mut points = Array2::zeros((k, features.dim()));
    for (l, mut row) in points.axis_iter_mut(Axis(0)).enumerate() {
        let t = (l + 1) as f64 / denom;
        row.assign(&(&xi + &(&diff * t)));
    }
    Ok(PathSample {
        endpoints: (i, j),
        points,
    })
}

fn check_kde_inputs(query: ArrayView1<'_, f64>, supports: ArrayView2<'_, f64>, h: f64) -> Result<()> {
    if supports.nrows() == 0 {
        return Err(Error::Empty("KDE support set"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Bandwidth(h));
    }
    if supports.ncols() != query.len() {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            actual: supports.ncols(),
        });
    }
    if query.iter().chain(supports.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KDE input"));
    }
    Ok(())
}

#[inline]
fn kernel_sum(query: ArrayView1<'_, f64>, supports: ArrayView2<'_, f64>, h: f64) -> f64 {
    supports
        .rows()
        .into_iter()
        .map(|s| (-squared_euclidean(s, query) / h).exp())
        .sum()
}

/// Raw estimate 1/(n·h) · Σ exp(-‖s_m − q‖² / h).
pub fn kde_density(query: ArrayView1<'_, f64>, supports: ArrayView2<'_, f64>, h: f64) -> Result<f64> {
    check_kde_inputs(query, supports, h)?;
    let n = supports.nrows() as f64;
    Ok(kernel_sum(query, supports, h) / (n * h))
}

/// The estimate with the 1/h prefactor dropped: the mean kernel value.
pub fn kde_density_normalized(query: ArrayView1<'_, f64>, supports: ArrayView2<'_, f64>, h: f64) -> Result<f64> {
    check_kde_inputs(query, supports, h)?;
    let n = supports.nrows() as f64;
    Ok(kernel_sum(query, supports, h) / n)
}

/// Row indices of the `n` rows nearest to `query`, nearest first. Ties go
/// to the lower row index.
pub fn select_kde_supports(features: &FeatureMatrix, query: ArrayView1<'_, f64>, n: usize) -> Result<Vec<usize>> {
    if query.len() != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            actual: query.len(),
        });
    }
    nearest_rows(features, query, n, None)
}

/// Shared nearest-row search; `exclude` removes one row from the pool.
pub(crate) fn nearest_rows(
    features: &FeatureMatrix,
    query: ArrayView1<'_, f64>,
    n: usize,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    let pool = features.rows() - usize::from(exclude.is_some());
    if n > pool {
        return Err(Error::CountTooLarge {
            requested: n,
            available: pool,
        });
    }
    let mut cand: Vec<(f64, usize)> = (0..features.rows())
        .filter(|&r| Some(r) != exclude)
        .map(|r| (squared_euclidean(features.row(r), query), r))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n == 0 {
        return Ok(Vec::new());
    }
    if n < cand.len() {
        cand.select_nth_unstable_by(n - 1, cmp);
        cand.truncate(n);
    }
    cand.sort_unstable_by(cmp);
    Ok(cand.into_iter().map(|(_, r)| r).collect())
}

/// Collapses path densities into one value. Values are sorted first, so the
/// result does not depend on their order.
pub fn aggregate_density(values: &[f64], aggregator: Aggregator) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("path densities"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len();
    Ok(match aggregator {
        Aggregator::Min => sorted[0],
        Aggregator::Max => sorted[m - 1],
        Aggregator::Avg => sorted.iter().sum::<f64>() / m as f64,
        Aggregator::Quantile(t) => quantile_sorted(&sorted, t),
    })
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], t: f64) -> f64 {
    let m = sorted.len();
    let pos = t.clamp(0.0, 1.0) * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    (a + (b - a) * frac).clamp(a, b)
}

/// Batched normalized KDE: each query row is scored against its own `n`
/// nearest rows of `features`. Queries are processed in parallel; every
/// value depends only on its own query.
pub fn batch_kde_normalized(
    features: &FeatureMatrix,
    queries: ArrayView2<'_, f64>,
    n: usize,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Bandwidth(h));
    }
    (0..queries.nrows())
        .into_par_iter()
        .map(|r| {
            let q = queries.row(r);
            let support_rows = select_kde_supports(features, q, n)?;
            let supports = features.view().select(Axis(0), &support_rows);
            kde_density_normalized(q, supports.view(), h)
        })
        .collect()
}

fn effective_support(features: &FeatureMatrix, cfg: &PmlpConfig) -> usize {
    cfg.kde_support_n.min(features.rows())
}

/// Normalized densities at the k interior points of the (i, j) path. The
/// path is always walked from the lower row index, so (i, j) and (j, i)
/// produce bit-identical values.
pub fn path_densities(features: &FeatureMatrix, i: usize, j: usize, cfg: &PmlpConfig) -> Result<PathDensities> {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    let path = sample_path(features, a, b, cfg.path_points_k)?;
    let n = effective_support(features, cfg);
    let values = path
        .points
        .rows()
        .into_iter()
        .map(|q| {
            let rows = nearest_rows(features, q, n, None)?;
            let supports = features.view().select(Axis(0), &rows);
            kde_density_normalized(q, supports.view(), cfg.bandwidth_h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathDensities(values))
}

/// I(p) for the pair (i, j): aggregated normalized path density in (0, 1].
pub fn path_density_info(features: &FeatureMatrix, i: usize, j: usize, cfg: &PmlpConfig) -> Result<f64> {
    let d = path_densities(features, i, j, cfg)?;
    aggregate_density(d.values(), cfg.aggregator)
}

/// max / min over every path density of every listed pair.
pub fn density_ratio(features: &FeatureMatrix, pairs: &[(usize, usize)], cfg: &PmlpConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("density ratio pair list"));
    }
    let per_pair: Vec<PathDensities> = pairs
        .par_iter()
        .map(|&(i, j)| path_densities(features, i, j, cfg))
        .collect::<Result<_>>()?;
    let all = per_pair.iter().flat_map(|d| d.values().iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo <= 0.0 {
        return Err(Error::ZeroDensity);
    }
    Ok(hi / lo)
}

/// Raw KDE at each query row using every row of `features` as support.
pub fn full_kde(features: &FeatureMatrix, queries: ArrayView2<'_, f64>, h: f64) -> Result<Array1<f64>> {
    let vals: Vec<f64> = (0..queries.nrows())
        .into_par_iter()
        .map(|r| kde_density(queries.row(r), features.view(), h))
        .collect::<Result<_>>()?;
    Ok(Array1::from(vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array2};
    use proptest::prelude::*;

    fn fm(rows: &[[f64; 2]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn three_interior_points() {
        let f = fm(&[[0.0, 0.0], [4.0, 0.0]]);
        let p = sample_path(&f, 0, 1, 3).unwrap();
        assert_eq!(p.points, arr2(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]));
    }

    #[test]
    fn single_point_is_midpoint() {
        let f = fm(&[[0.0, 0.0], [2.0, 2.0]]);
        let p = sample_path(&f, 0, 1, 1).unwrap();
        assert_eq!(p.points, arr2(&[[1.0, 1.0]]));
    }

    #[test]
    fn thirds_on_vertical_segment() {
        let f = fm(&[[1.0, 1.0], [1.0, 5.0]]);
        let p = sample_path(&f, 0, 1, 2).unwrap();
        assert_close(p.points[[0, 0]], 1.0, 1e-9);
        assert_close(p.points[[0, 1]], 7.0 / 3.0, 1e-9);
        assert_close(p.points[[1, 0]], 1.0, 1e-9);
        assert_close(p.points[[1, 1]], 11.0 / 3.0, 1e-9);
    }

    #[test]
    fn same_endpoint_rejected() {
        let f = fm(&[[1.0, 1.0], [1.0, 5.0]]);
        assert_eq!(sample_path(&f, 1, 1, 2), Err(Error::IdenticalEndpoints(1)));
    }

    #[test]
    fn kde_single_coincident_support() {
        let v = kde_density(arr1(&[0.0, 0.0]).view(), arr2(&[[0.0, 0.0]]).view(), 1.0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn kde_two_unit_supports() {
        let q = arr1(&[0.0, 0.0]);
        let s = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        // (1/(2·2)) · 2 · e^{-1/2}
        let expected = 0.25 * 2.0 * (-0.5f64).exp();
        assert_close(kde_density(q.view(), s.view(), 2.0).unwrap(), expected, 1e-15);
        assert_close(expected, 0.303265, 1e-6);
        let norm = kde_density_normalized(q.view(), s.view(), 2.0).unwrap();
        assert_close(norm, 2.0 * expected, 1e-15);
        assert_close(norm, 0.606531, 1e-6);
    }

    #[test]
    fn kde_large_bandwidth_limits() {
        let q = arr1(&[0.0, 0.0]);
        let s = arr2(&[[1.0, 0.0]]);
        let h = 1e12;
        let raw = kde_density(q.view(), s.view(), h).unwrap();
        assert!(raw <= 1.0 / h && raw > 0.0);
        let norm = kde_density_normalized(q.view(), s.view(), h).unwrap();
        assert_close(norm, 1.0, 1e-6);
        let far = arr2(&[[30.0, -40.0], [7.0, 2.0], [-3.0, 0.5]]);
        assert_close(kde_density_normalized(q.view(), far.view(), h).unwrap(), 1.0, 1e-6);
    }

    #[test]
    fn coincident_single_support_is_one_at_any_h() {
        let q = arr1(&[3.5, -1.25]);
        let s = arr2(&[[3.5, -1.25]]);
        for h in [1e-6, 0.3, 5.0, 1e9] {
            assert_eq!(kde_density_normalized(q.view(), s.view(), h).unwrap(), 1.0);
        }
    }

    #[test]
    fn kde_errors() {
        let q = arr1(&[0.0, 0.0]);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(kde_density(q.view(), empty.view(), 1.0), Err(Error::Empty(_))));
        let s = arr2(&[[1.0, 0.0]]);
        assert_eq!(kde_density(q.view(), s.view(), 0.0), Err(Error::Bandwidth(0.0)));
        assert_eq!(kde_density(q.view(), s.view(), -1.0), Err(Error::Bandwidth(-1.0)));
    }

    #[test]
    fn nearest_two_supports() {
        let f = fm(&[[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]]);
        assert_eq!(
            select_kde_supports(&f, arr1(&[0.4, 0.0]).view(), 2).unwrap(),
            vec![0, 1]
        );
        let mut all = select_kde_supports(&f, arr1(&[0.4, 0.0]).view(), 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(matches!(
            select_kde_supports(&f, arr1(&[0.4, 0.0]).view(), 4),
            Err(Error::CountTooLarge { .. })
        ));
    }

    #[test]
    fn equidistant_tie_prefers_lower_row() {
        let mut rows = vec![[10.0, 10.0]; 8];
        rows[2] = [1.0, 0.0];
        rows[7] = [-1.0, 0.0];
        let f = fm(&rows);
        let picked = select_kde_supports(&f, arr1(&[0.0, 0.0]).view(), 1).unwrap();
        assert_eq!(picked, vec![2]);
        let picked = select_kde_supports(&f, arr1(&[0.0, 0.0]).view(), 2).unwrap();
        assert_eq!(picked, vec![2, 7]);
    }

    #[test]
    fn aggregator_examples() {
        assert_eq!(aggregate_density(&[1.0, 2.0, 3.0], Aggregator::Avg).unwrap(), 2.0);
        assert_eq!(
            aggregate_density(&[1.0, 2.0, 3.0], Aggregator::Quantile(0.5)).unwrap(),
            2.0
        );
        assert_eq!(aggregate_density(&[4.0, 1.0, 9.0, 16.0], Aggregator::Min).unwrap(), 1.0);
        assert_eq!(
            aggregate_density(&[4.0, 1.0, 9.0, 16.0], Aggregator::Max).unwrap(),
            16.0
        );
        // even-length median interpolates
        assert_eq!(
            aggregate_density(&[4.0, 1.0, 9.0, 16.0], Aggregator::Quantile(0.5)).unwrap(),
            6.5
        );
        assert!(aggregate_density(&[], Aggregator::Avg).is_err());
    }

    #[test]
    fn huge_bandwidth_path_info_is_one() {
        let f = fm(&[[0.0, 0.0], [3.0, 1.0], [8.0, -2.0], [1.0, 1.0]]);
        let cfg = PmlpConfig {
            bandwidth_h: 1e12,
            path_points_k: 3,
            kde_support_n: 3,
            ..PmlpConfig::default()
        };
        for (i, j) in [(0, 1), (1, 2), (0, 3), (2, 3)] {
            assert_close(path_density_info(&f, i, j, &cfg).unwrap(), 1.0, 1e-6);
        }
    }

    #[test]
    fn path_info_symmetric_exactly() {
        let f = fm(&[[0.1, 0.7], [3.3, 1.9], [8.2, -2.4], [1.6, 1.1], [2.2, 0.4]]);
        for agg in [
            Aggregator::Min,
            Aggregator::Max,
            Aggregator::Avg,
            Aggregator::Quantile(0.3),
        ] {
            let cfg = PmlpConfig {
                bandwidth_h: 0.7,
                path_points_k: 4,
                kde_support_n: 3,
                aggregator: agg,
                ..PmlpConfig::default()
            };
            for i in 0..5 {
                for j in 0..5 {
                    if i != j {
                        let a = path_density_info(&f, i, j, &cfg).unwrap();
                        let b = path_density_info(&f, j, i, &cfg).unwrap();
                        assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn coincident_supports_give_unit_ratio() {
        // Every row sits at the same point, so every query's supports coincide
        // with each other; with equal distances all densities are equal.
        let f = fm(&[[1.0, 1.0], [3.0, 1.0], [1.0, 1.0], [3.0, 1.0]]);
        let cfg = PmlpConfig {
            bandwidth_h: 2.0,
            path_points_k: 1,
            kde_support_n: 4,
            ..PmlpConfig::default()
        };
        let r = density_ratio(&f, &[(0, 1), (2, 3), (0, 3)], &cfg).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn huge_bandwidth_ratio_near_one() {
        let f = fm(&[[0.0, 0.0], [3.0, 1.0], [8.0, -2.0], [1.0, 1.0], [-4.0, 6.0]]);
        let cfg = PmlpConfig {
            bandwidth_h: 1e12,
            path_points_k: 3,
            kde_support_n: 3,
            ..PmlpConfig::default()
        };
        let r = density_ratio(&f, &[(0, 1), (1, 2), (3, 4), (0, 4)], &cfg).unwrap();
        assert!((1.0..=1.0 + 1e-3).contains(&r), "ratio {r}");
    }

    #[test]
    fn batch_matches_single_queries() {
        let f = fm(&[[0.0, 0.0], [1.0, 0.5], [2.0, 2.0], [-1.0, 0.3], [0.2, 0.2]]);
        let queries = arr2(&[[0.5, 0.25], [1.5, 1.25], [-0.4, 0.1]]);
        let batch = batch_kde_normalized(&f, queries.view(), 3, 0.8).unwrap();
        for (q, b) in queries.rows().into_iter().zip(batch) {
            let rows = select_kde_supports(&f, q, 3).unwrap();
            let s = f.view().select(Axis(0), &rows);
            assert_eq!(b, kde_density_normalized(q, s.view(), 0.8).unwrap());
        }
    }

    fn kde_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
        (1usize..4).prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), 1..8),
                0.01f64..100.0,
            )
        })
    }

    fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
        let d = rows[0].len();
        Array2::from_shape_vec((rows.len(), d), rows.concat()).unwrap()
    }

    proptest! {
        #[test]
        fn normalized_density_in_unit_interval((q, s, h) in kde_case()) {
            let v = kde_density_normalized(arr1(&q).view(), to_array(&s).view(), h).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn normalized_density_monotone_in_h((q, s, h) in kde_case(), factor in 1.0f64..50.0) {
            let q = arr1(&q);
            let s = to_array(&s);
            let lo = kde_density_normalized(q.view(), s.view(), h).unwrap();
            let hi = kde_density_normalized(q.view(), s.view(), h * factor).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn quantile_between_min_and_max(
            values in prop::collection::vec(0.0f64..10.0, 1..12),
            t in 0.001f64..0.999,
        ) {
            let lo = aggregate_density(&values, Aggregator::Min).unwrap();
            let hi = aggregate_density(&values, Aggregator::Max).unwrap();
            let q = aggregate_density(&values, Aggregator::Quantile(t)).unwrap();
            prop_assert!(lo <= q && q <= hi);
        }

        #[test]
        fn aggregators_order_invariant(values in prop::collection::vec(0.0f64..10.0, 1..12)) {
            let mut rev = values.clone();
            rev.reverse();
            for agg in [Aggregator::Min, Aggregator::Max, Aggregator::Avg, Aggregator::Quantile(0.37)] {
                prop_assert_eq!(
                    aggregate_density(&values, agg).unwrap().to_bits(),
                    aggregate_density(&rev, agg).unwrap().to_bits()
                );
            }
        }
    }
}

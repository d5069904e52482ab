//! Base measures D(a, b) between feature vectors.

use ndarray::ArrayView1;

use crate::config::DistanceMode;
use crate::error::{Error, Result};

/// Euclidean distance in `EuclideanInverse` mode; the raw similarity in the
/// two similarity modes. Inversion happens when the affinity is built.
pub fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, mode: DistanceMode) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("distance input"));
    }
    match mode {
        DistanceMode::EuclideanInverse => Ok(squared_euclidean(a, b).sqrt()),
        DistanceMode::FirstOrderSimilarity => Ok(dot(a, b)),
        DistanceMode::CosineSimilarity => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::Degenerate("cosine similarity of a zero-norm vector".into()));
            }
            // Sorting the norms keeps the result bitwise symmetric in (a, b).
            let (lo, hi) = if na <= nb { (na, nb) } else { (nb, na) };
            Ok(dot(a, b) / (lo * hi))
        }
    }
}

/// Sum of squared coordinate differences. Symmetric bit-for-bit because
/// (x - y)² == (y - x)².
#[inline]
pub fn squared_euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1};
    use proptest::prelude::*;

    const MODES: [DistanceMode; 3] = [
        DistanceMode::EuclideanInverse,
        DistanceMode::CosineSimilarity,
        DistanceMode::FirstOrderSimilarity,
    ];

    #[test]
    fn three_four_five() {
        let d = distance(
            arr1(&[0.0, 0.0]).view(),
            arr1(&[3.0, 4.0]).view(),
            DistanceMode::EuclideanInverse,
        );
        assert_eq!(d.unwrap(), 5.0);
    }

    #[test]
    fn identical_points_zero() {
        let a = arr1(&[1.0, 2.0]);
        assert_eq!(
            distance(a.view(), a.view(), DistanceMode::EuclideanInverse).unwrap(),
            0.0
        );
    }

    #[test]
    fn orthogonal_cosine_zero() {
        let d = distance(
            arr1(&[1.0, 0.0]).view(),
            arr1(&[0.0, 1.0]).view(),
            DistanceMode::CosineSimilarity,
        );
        assert_eq!(d.unwrap(), 0.0);
    }

    #[test]
    fn first_order_is_inner_product() {
        let d = distance(
            arr1(&[1.0, 2.0]).view(),
            arr1(&[3.0, -1.0]).view(),
            DistanceMode::FirstOrderSimilarity,
        );
        assert_eq!(d.unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let r = distance(
            arr1(&[1.0]).view(),
            arr1(&[1.0, 2.0]).view(),
            DistanceMode::EuclideanInverse,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_norm_cosine_errors() {
        let r = distance(
            arr1(&[0.0, 0.0]).view(),
            arr1(&[1.0, 2.0]).view(),
            DistanceMode::CosineSimilarity,
        );
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    fn vec3() -> impl Strategy<Value = Array1<f64>> {
        prop::collection::vec(-100.0f64..100.0, 3).prop_map(Array1::from)
    }

    proptest! {
        #[test]
        fn symmetric_in_all_modes(a in vec3(), b in vec3()) {
            for mode in MODES {
                let ab = distance(a.view(), b.view(), mode);
                let ba = distance(b.view(), a.view(), mode);
                match (ab, ba) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "asymmetric error behaviour"),
                }
            }
        }

        #[test]
        fn euclidean_triangle_inequality(a in vec3(), b in vec3(), c in vec3()) {
            let m = DistanceMode::EuclideanInverse;
            let ab = distance(a.view(), b.view(), m).unwrap();
            let bc = distance(b.view(), c.view(), m).unwrap();
            let ac = distance(a.view(), c.view(), m).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}

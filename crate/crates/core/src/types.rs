//! Domain types shared by every stage of the pipeline.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense storage is used throughout; this is the documented row ceiling.
pub const MAX_ROWS: usize = 20_000;

/// Tolerance used when checking that a probability vector sums to one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// N rows of d-dimensional finite feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, dim) = data.dim();
        if rows == 0 {
            return Err(Error::Empty("feature matrix has no rows"));
        }
        if dim == 0 {
            return Err(Error::Empty("feature matrix has zero dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("feature matrix has no rows"))?;
        let dim = first.len();
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let data = Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn checked_row(&self, i: usize) -> Result<ArrayView1<'_, f64>> {
        if i >= self.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                rows: self.rows(),
            });
        }
        Ok(self.data.row(i))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Copy of the listed rows, in order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        for &r in rows {
            self.checked_row(r)?;
        }
        Self::new(self.data.select(Axis(0), rows))
    }
}

/// Label state of a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelAssignment {
    GroundTruth(usize),
    Prediction(Vec<f64>),
    Unlabeled,
}

impl LabelAssignment {
    /// Checks the assignment against a class count `num_classes`.
    pub fn validate(&self, row: usize, num_classes: usize) -> Result<()> {
        match self {
            LabelAssignment::GroundTruth(c) if *c >= num_classes => Err(Error::InvalidLabel {
                row,
                reason: format!("class {c} >= class count {num_classes}"),
            }),
            LabelAssignment::Prediction(p) => {
                if p.len() != num_classes {
                    return Err(Error::InvalidLabel {
                        row,
                        reason: format!("prediction has {} entries, expected {num_classes}", p.len()),
                    });
                }
                if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidLabel {
                        row,
                        reason: "prediction entries must be finite and >= 0".into(),
                    });
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
                    return Err(Error::InvalidLabel {
                        row,
                        reason: format!("prediction sums to {sum}, expected 1"),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_ground_truth(&self) -> bool {
        matches!(self, LabelAssignment::GroundTruth(_))
    }
}

/// Smallest class count consistent with a set of assignments, if any row
/// pins it down.
pub fn infer_num_classes(assignments: &[LabelAssignment]) -> Option<usize> {
    assignments
        .iter()
        .filter_map(|a| match a {
            LabelAssignment::GroundTruth(c) => Some(c + 1),
            LabelAssignment::Prediction(p) => Some(p.len()),
            LabelAssignment::Unlabeled => None,
        })
        .max()
}

/// N x C matrix of nonnegative class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    data: Array2<f64>,
}

impl SoftLabelMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("soft label matrix"));
        }
        if data.iter().any(|v| *v < 0.0) {
            return Err(Error::Negative("soft label matrix"));
        }
        Ok(Self { data })
    }

    pub fn zeros(rows: usize, classes: usize) -> Self {
        Self {
            data: Array2::zeros((rows, classes)),
        }
    }

    /// One-hot rows for ground truth, the stored vector for predictions and
    /// an all-zero row for unlabeled entries.
    pub fn from_assignments(assignments: &[LabelAssignment], num_classes: usize) -> Result<Self> {
        let mut data = Array2::zeros((assignments.len(), num_classes));
        for (row, a) in assignments.iter().enumerate() {
            a.validate(row, num_classes)?;
            match a {
                LabelAssignment::GroundTruth(c) => data[[row, *c]] = 1.0,
                LabelAssignment::Prediction(p) => data.row_mut(row).assign(&ArrayView1::from(p.as_slice())),
                LabelAssignment::Unlabeled => {}
            }
        }
        Self::new(data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn row_max(&self, i: usize) -> f64 {
        self.data.row(i).iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest entry; `None` for an all-zero row. Ties go to the
    /// lowest class index.
    pub fn argmax(&self, i: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (c, &v) in self.data.row(i).iter().enumerate() {
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((c, v));
            }
        }
        best.map(|(c, _)| c)
    }

    pub fn argmax_all(&self) -> Vec<Option<usize>> {
        (0..self.rows()).map(|i| self.argmax(i)).collect()
    }

    /// Rows rescaled to unit mass; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for mut row in data.rows_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v / s);
            }
        }
        Self { data }
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.data.sum_axis(Axis(1))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data.view(), &other.data.view())
    }
}

/// Symmetric, nonnegative N x N matrix with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    data: Array2<f64>,
}

impl AffinityMatrix {
    /// Validates `raw`, zeroes its diagonal and symmetrizes it as (M + Mᵀ)/2.
    pub fn symmetrized(raw: Array2<f64>) -> Result<Self> {
        let (r, c) = raw.dim();
        if r != c {
            return Err(Error::ShapeMismatch(format!("affinity matrix is {r} x {c}")));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affinity matrix"));
        }
        if raw.iter().any(|v| *v < 0.0) {
            return Err(Error::Negative("affinity matrix"));
        }
        let mut data = Array2::zeros((r, r));
        for i in 0..r {
            for j in (i + 1)..r {
                let v = 0.5 * (raw[[i, j]] + raw[[j, i]]);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        Ok(Self { data })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    /// Row sums.
    pub fn degrees(&self) -> Array1<f64> {
        self.data.sum_axis(Axis(1))
    }

    /// Every entry multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Degenerate(format!(
                "scale factor must be finite and > 0, got {c}"
            )));
        }
        Ok(Self {
            data: self.data.mapv(|v| v * c),
        })
    }
}

pub(crate) fn max_abs_diff(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff on mismatched shapes");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

//! Confidence split, label propagation and final mixing.
//!
//! Pipeline for one run:
//!
//! 1. rows with max score ≥ τ (and every ground-truth row) form `Y_high`,
//!    the rest form `Y_low`;
//! 2. a KNN affinity over all rows is built, density-reweighted in PMLP mode;
//! 3. `S = D^{-1/2} W D^{-1/2}`;
//! 4. `Y' ← α S Y' + (1 − α) Y_high` is iterated to its fixed point
//!    `(1 − α)(I − αS)^{-1} Y_high`, or that system is solved directly;
//! 5. `Y* = η Y' + (1 − η) Y_low`.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Zip};

use crate::config::{validate_config, ClosedFormScaling, PmlpConfig, Solver};
use crate::error::{Error, Result};
use crate::graph::{build_knn_affinity, normalize_symmetric, NormalizedAffinity};
use crate::types::{infer_num_classes, AffinityMatrix, FeatureMatrix, LabelAssignment, SoftLabelMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSplit {
    pub high: SoftLabelMatrix,
    pub low: SoftLabelMatrix,
    pub high_mask: Vec<bool>,
}

/// Routes each row to `high` when its max entry reaches `tau` or it carries
/// a ground-truth label, otherwise to `low`. The other matrix gets a zero row.
pub fn split_by_confidence(labels: &SoftLabelMatrix, ground_truth_mask: &[bool], tau: f64) -> Result<ConfidenceSplit> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(crate::error::ConfigError::Tau(tau).into());
    }
    if ground_truth_mask.len() != labels.rows() {
        return Err(Error::ShapeMismatch(format!(
            "ground-truth mask has {} rows, labels have {}",
            ground_truth_mask.len(),
            labels.rows()
        )));
    }
    let (n, c) = (labels.rows(), labels.classes());
    let mut high = Array2::zeros((n, c));
    let mut low = Array2::zeros((n, c));
    let mut high_mask = Vec::with_capacity(n);
    for (t, &gt) in ground_truth_mask.iter().enumerate() {
        let is_high = gt || labels.row_max(t) >= tau;
        let dst = if is_high { &mut high } else { &mut low };
        dst.row_mut(t).assign(&labels.row(t));
        high_mask.push(is_high);
    }
    Ok(ConfidenceSplit {
        high: SoftLabelMatrix::new(high)?,
        low: SoftLabelMatrix::new(low)?,
        high_mask,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(crate::error::ConfigError::Alpha(alpha).into())
    }
}

fn check_conformable(s: &NormalizedAffinity, y: &SoftLabelMatrix) -> Result<()> {
    if s.size() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "operator is {0} x {0}, labels have {1} rows",
            s.size(),
            y.rows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeOutcome {
    pub labels: SoftLabelMatrix,
    pub iterations: usize,
    /// Max-abs change of the last step.
    pub residual: f64,
    pub converged: bool,
    /// Frobenius norm of every step's change, in order.
    pub step_norms: Vec<f64>,
}

/// Iterates `Y ← α S Y + (1 − α) Y_high` from `Y_high` until the max-abs
/// change drops below `tol` or `max_iters` steps have run.
pub fn propagate_iterative(
    s: &NormalizedAffinity,
    y_high: &SoftLabelMatrix,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> Result<IterativeOutcome> {
    check_alpha(alpha)?;
    check_conformable(s, y_high)?;
    let anchor = y_high.view().mapv(|v| (1.0 - alpha) * v);
    let mut current = y_high.view().to_owned();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut step_norms = Vec::new();
    while iterations < max_iters {
        let mut next = s.view().dot(&current);
        Zip::from(&mut next).and(&anchor).for_each(|x, &a| *x = alpha * *x + a);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("propagation iterate"));
        }
        iterations += 1;
        let (max_abs, sq) = next
            .iter()
            .zip(current.iter())
            .fold((0.0f64, 0.0f64), |(m, s), (a, b)| {
                let d = (a - b).abs();
                (m.max(d), s + d * d)
            });
        residual = max_abs;
        step_norms.push(sq.sqrt());
        current = next;
        if residual < tol {
            converged = true;
            break;
        }
    }
    // Round-off can leave entries a hair below zero when S has cancellations.
    current.mapv_inplace(|v| v.max(0.0));
    Ok(IterativeOutcome {
        labels: SoftLabelMatrix::new(current)?,
        iterations,
        residual,
        converged,
        step_norms,
    })
}

/// Solves `(I − αS) Y' = Y_high` directly. `I − αS` is symmetric positive
/// definite whenever the spectrum of S lies in [−1, 1], so Cholesky is tried
/// first with LU as the fallback.
pub fn propagate_closed_form(s: &NormalizedAffinity, y_high: &SoftLabelMatrix, alpha: f64) -> Result<SoftLabelMatrix> {
    check_alpha(alpha)?;
    check_conformable(s, y_high)?;
    let n = s.size();
    let sv = s.view();
    let system = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - alpha * sv[[i, j]]
    });
    let yv = y_high.view();
    let rhs = DMatrix::from_fn(n, y_high.classes(), |i, j| yv[[i, j]]);
    let sol = match system.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("I - alpha*S is singular".into()))?,
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("closed-form solution"));
    }
    let out = Array2::from_shape_fn((n, y_high.classes()), |(i, j)| sol[(i, j)].max(0.0));
    SoftLabelMatrix::new(out)
}

/// `η Y' + (1 − η) Y_low`, entrywise, without renormalization.
pub fn mix_final(propagated: &SoftLabelMatrix, low: &SoftLabelMatrix, eta: f64) -> Result<SoftLabelMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(crate::error::ConfigError::Eta(eta).into());
    }
    if propagated.view().dim() != low.view().dim() {
        return Err(Error::ShapeMismatch(format!(
            "propagated is {:?}, low is {:?}",
            propagated.view().dim(),
            low.view().dim()
        )));
    }
    let mut out = propagated.view().mapv(|v| eta * v);
    Zip::from(&mut out)
        .and(&low.view())
        .for_each(|o, &l| *o += (1.0 - eta) * l);
    SoftLabelMatrix::new(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    /// Y*, the mixed output.
    pub final_labels: SoftLabelMatrix,
    /// Y', the propagated labels before mixing.
    pub propagated: SoftLabelMatrix,
    pub high_mask: Vec<bool>,
    /// 0 for the direct solver.
    pub iterations_used: usize,
    /// Last max-abs step change; `None` for the direct solver.
    pub residual: Option<f64>,
    pub converged: bool,
    pub num_classes: usize,
}

impl PropagationResult {
    pub fn argmax(&self) -> Vec<Option<usize>> {
        self.final_labels.argmax_all()
    }
}

/// Labels prepared for propagation: the soft matrix, which rows are ground
/// truth, and the class count.
#[derive(Debug, Clone)]
pub struct PreparedLabels {
    pub labels: SoftLabelMatrix,
    pub ground_truth_mask: Vec<bool>,
    pub num_classes: usize,
}

pub fn prepare_labels(assignments: &[LabelAssignment], num_classes: Option<usize>) -> Result<PreparedLabels> {
    if !assignments.iter().any(LabelAssignment::is_ground_truth) {
        return Err(Error::NoGroundTruth);
    }
    let inferred = infer_num_classes(assignments).unwrap_or(0);
    let c = num_classes.unwrap_or(inferred);
    if c < 2 {
        return Err(Error::TooFewClasses(c));
    }
    let labels = SoftLabelMatrix::from_assignments(assignments, c)?;
    Ok(PreparedLabels {
        labels,
        ground_truth_mask: assignments.iter().map(LabelAssignment::is_ground_truth).collect(),
        num_classes: c,
    })
}

/// Everything after graph construction: split, normalize, propagate, clamp,
/// mix. Exposed so callers can hand in an affinity of their own, e.g. a
/// rescaled one.
pub fn propagate_on_affinity(
    w: &AffinityMatrix,
    prepared: &PreparedLabels,
    cfg: &PmlpConfig,
) -> Result<PropagationResult> {
    let cfg = validate_config(cfg.clone())?;
    if w.size() != prepared.labels.rows() {
        return Err(Error::ShapeMismatch(format!(
            "affinity is {0} x {0}, labels have {1} rows",
            w.size(),
            prepared.labels.rows()
        )));
    }
    let split = split_by_confidence(&prepared.labels, &prepared.ground_truth_mask, cfg.tau)?;
    if !split.high_mask.iter().any(|&h| h) {
        return Err(Error::EmptyHighConfidenceSet);
    }
    let s = normalize_symmetric(w)?;

    let (mut propagated, iterations_used, residual, converged) = match cfg.solver {
        Solver::Iterative { max_iters, tol } => {
            let out = propagate_iterative(&s, &split.high, cfg.alpha, max_iters, tol)?;
            (out.labels, out.iterations, Some(out.residual), out.converged)
        }
        Solver::ClosedForm => {
            let sol = propagate_closed_form(&s, &split.high, cfg.alpha)?;
            let sol = match cfg.closed_form_scaling {
                ClosedFormScaling::PaperClosedForm => sol,
                ClosedFormScaling::IterativeFixedPoint => {
                    SoftLabelMatrix::new(sol.view().mapv(|v| (1.0 - cfg.alpha) * v))?
                }
            };
            (sol, 0, None, true)
        }
    };

    if cfg.clamp_ground_truth {
        let mut data = propagated.into_inner();
        for (t, &gt) in prepared.ground_truth_mask.iter().enumerate() {
            if gt {
                data.row_mut(t).assign(&prepared.labels.row(t));
            }
        }
        propagated = SoftLabelMatrix::new(data)?;
    }

    let mut final_labels = mix_final(&propagated, &split.low, cfg.eta)?;
    if cfg.renormalize_output {
        final_labels = final_labels.row_normalized();
    }
    Ok(PropagationResult {
        final_labels,
        propagated,
        high_mask: split.high_mask,
        iterations_used,
        residual,
        converged,
        num_classes: prepared.num_classes,
    })
}

/// KNN affinity over every row, density-reweighted in PMLP mode. The
/// neighbor count is capped at N − 1.
pub fn build_pipeline_affinity(
    features: &FeatureMatrix,
    num_classes: usize,
    cfg: &PmlpConfig,
) -> Result<AffinityMatrix> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::Degenerate("propagation needs at least 2 rows".into()));
    }
    let k = cfg.neighbor_count_for(num_classes).min(n - 1);
    let nodes: Vec<usize> = (0..n).collect();
    build_knn_affinity(features, &nodes, k, cfg)
}

/// Full density-aware propagation with the class count inferred from the
/// assignments.
pub fn run_pmlp(
    features: &FeatureMatrix,
    assignments: &[LabelAssignment],
    cfg: &PmlpConfig,
) -> Result<PropagationResult> {
    run_pmlp_with_classes(features, assignments, None, cfg)
}

pub fn run_pmlp_with_classes(
    features: &FeatureMatrix,
    assignments: &[LabelAssignment],
    num_classes: Option<usize>,
    cfg: &PmlpConfig,
) -> Result<PropagationResult> {
    let cfg = validate_config(cfg.clone())?;
    if assignments.len() != features.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} label assignments for {} feature rows",
            assignments.len(),
            features.rows()
        )));
    }
    let prepared = prepare_labels(assignments, num_classes)?;
    let w = build_pipeline_affinity(features, prepared.num_classes, &cfg)?;
    propagate_on_affinity(&w, &prepared, &cfg)
}

/// Share of rows whose max score reaches `tau`.
pub fn high_confidence_ratio(labels: ArrayView2<'_, f64>, tau: f64) -> f64 {
    let n = labels.nrows();
    if n == 0 {
        return 0.0;
    }
    let hits = labels
        .rows()
        .into_iter()
        .filter(|r| r.iter().copied().fold(0.0, f64::max) >= tau)
        .count();
    hits as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;
    use ndarray::array;

    fn slm(a: Array2<f64>) -> SoftLabelMatrix {
        SoftLabelMatrix::new(a).unwrap()
    }

    #[test]
    fn split_examples() {
        let labels = slm(array![[0.97, 0.03], [0.6, 0.4]]);
        let s = split_by_confidence(&labels, &[false, false], 0.95).unwrap();
        assert_eq!(s.high_mask, vec![true, false]);
        assert_eq!(s.high.row(0).to_vec(), vec![0.97, 0.03]);
        assert_eq!(s.low.row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.low.row(1).to_vec(), vec![0.6, 0.4]);
        assert_eq!(s.high.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn ground_truth_always_high() {
        let labels = SoftLabelMatrix::from_assignments(&[LabelAssignment::GroundTruth(2)], 3).unwrap();
        let s = split_by_confidence(&labels, &[true], 1.0).unwrap();
        assert_eq!(s.high.row(0).to_vec(), vec![0.0, 0.0, 1.0]);
        assert!(s.high_mask[0]);
    }

    #[test]
    fn split_sums_back() {
        let labels = slm(array![[0.97, 0.03], [0.6, 0.4], [0.0, 0.0], [0.5, 0.5]]);
        let s = split_by_confidence(&labels, &[false, false, false, true], 0.9).unwrap();
        let sum = &s.high.view() + &s.low.view();
        assert_eq!(sum, labels.view());
    }

    #[test]
    fn split_rejects_bad_tau() {
        let labels = slm(array![[1.0, 0.0]]);
        assert!(split_by_confidence(&labels, &[false], 0.0).is_err());
        assert!(split_by_confidence(&labels, &[false], 1.5).is_err());
    }

    #[test]
    fn zero_operator_one_step() {
        let s = NormalizedAffinity::from_raw(Array2::zeros((2, 2))).unwrap();
        let y = slm(array![[1.0, 0.0], [0.3, 0.7]]);
        let out = propagate_iterative(&s, &y, 0.8, 1, 1e-12).unwrap();
        let expected = y.view().mapv(|v| 0.2 * v);
        assert!(out
            .labels
            .view()
            .iter()
            .zip(expected.iter())
            .all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(out.iterations, 1);
        let closed = propagate_closed_form(&s, &y, 0.8).unwrap();
        assert_eq!(closed.view(), y.view());
    }

    #[test]
    fn zero_labels_stay_zero() {
        let s = NormalizedAffinity::from_raw(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let y = SoftLabelMatrix::zeros(2, 3);
        let out = propagate_iterative(&s, &y, 0.5, 100, 1e-12).unwrap();
        assert!(out.labels.view().iter().all(|&v| v == 0.0));
        assert!(out.converged);
    }

    #[test]
    fn two_node_fixed_point() {
        // (I - 0.5 S)^{-1} = (4/3) [[1, 0.5], [0.5, 1]] for S = [[0,1],[1,0]]
        let s = NormalizedAffinity::from_raw(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let y = slm(array![[1.0, 0.0], [0.0, 0.0]]);
        let closed = propagate_closed_form(&s, &y, 0.5).unwrap();
        assert!((closed.view()[[0, 0]] - 4.0 / 3.0).abs() < 1e-12);
        assert!((closed.view()[[1, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(closed.view()[[1, 1]], 0.0);
        let it = propagate_iterative(&s, &y, 0.5, 10_000, 1e-14).unwrap();
        let scaled = closed.view().mapv(|v| 0.5 * v);
        let diff = crate::types::max_abs_diff(&it.labels.view(), &scaled.view());
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn mix_boundaries_and_published_eta() {
        let p = slm(array![[1.0, 0.0]]);
        let low = slm(array![[0.6, 0.4]]);
        assert_eq!(mix_final(&p, &low, 1.0).unwrap(), p);
        assert_eq!(mix_final(&p, &low, 0.0).unwrap(), low);
        let m = mix_final(&p, &low, 0.2).unwrap();
        assert!((m.view()[[0, 0]] - 0.68).abs() < 1e-15);
        assert!((m.view()[[0, 1]] - 0.32).abs() < 1e-15);
        assert!(mix_final(&p, &SoftLabelMatrix::zeros(2, 2), 0.5).is_err());
    }

    #[test]
    fn no_edges_mass_formula() {
        let (alpha, eta) = (0.8, 0.2);
        let s = NormalizedAffinity::from_raw(Array2::zeros((3, 3))).unwrap();
        let labels = slm(array![[1.0, 0.0], [0.6, 0.4], [0.1, 0.9]]);
        let split = split_by_confidence(&labels, &[true, false, false], 0.85).unwrap();
        let out = propagate_iterative(&s, &split.high, alpha, 50, 1e-15).unwrap();
        let mixed = mix_final(&out.labels, &split.low, eta).unwrap();
        let expected =
            &split.high.view().mapv(|v| eta * ((1.0 - alpha) * v)) + &split.low.view().mapv(|v| (1.0 - eta) * v);
        assert_eq!(mixed.view(), expected);
    }

    #[test]
    fn empty_high_set_errors() {
        let w = AffinityMatrix::symmetrized(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let prepared = PreparedLabels {
            labels: slm(array![[0.6, 0.4], [0.5, 0.5]]),
            ground_truth_mask: vec![false, false],
            num_classes: 2,
        };
        let r = propagate_on_affinity(&w, &prepared, &PmlpConfig::default());
        assert_eq!(r, Err(Error::EmptyHighConfidenceSet));
    }

    #[test]
    fn requires_ground_truth_and_two_classes() {
        assert_eq!(
            prepare_labels(&[LabelAssignment::Unlabeled], None).unwrap_err(),
            Error::NoGroundTruth
        );
        assert_eq!(
            prepare_labels(&[LabelAssignment::GroundTruth(0), LabelAssignment::Unlabeled], None).unwrap_err(),
            Error::TooFewClasses(1)
        );
        assert!(prepare_labels(&[LabelAssignment::GroundTruth(0)], Some(2)).is_ok());
    }

    #[test]
    fn closed_form_scaling_modes() {
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let a = [
            LabelAssignment::GroundTruth(0),
            LabelAssignment::Unlabeled,
            LabelAssignment::Unlabeled,
            LabelAssignment::GroundTruth(1),
        ];
        let base = PmlpConfig {
            mode: Mode::ClassicalLpa,
            solver: Solver::ClosedForm,
            clamp_ground_truth: false,
            ..PmlpConfig::default()
        };
        let fixed = run_pmlp(&f, &a, &base).unwrap();
        let raw = run_pmlp(
            &f,
            &a,
            &PmlpConfig {
                closed_form_scaling: ClosedFormScaling::PaperClosedForm,
                ..base.clone()
            },
        )
        .unwrap();
        let rescaled = raw.propagated.view().mapv(|v| 0.2 * v);
        assert!(crate::types::max_abs_diff(&fixed.propagated.view(), &rescaled.view()) < 1e-14);
        assert_eq!(fixed.argmax(), raw.argmax());
    }

    #[test]
    fn high_ratio_counts_rows() {
        let y = array![[0.97, 0.03], [0.6, 0.4], [0.0, 0.0], [0.95, 0.05]];
        assert_eq!(high_confidence_ratio(y.view(), 0.95), 0.5);
    }
}

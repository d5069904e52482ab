//! Seeded synthetic datasets and statistical checks run on them.
//!
//! Every generator is a pure function of its parameters and seed. The
//! checks here are statistical, so their assertions live next to fixed seeds
//! in the test suites.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, PmlpConfig};
use crate::density::{density_ratio, full_kde, quantile_sorted};
use crate::error::{Error, Result};
use crate::propagate::run_pmlp_with_classes;
use crate::types::{FeatureMatrix, LabelAssignment, SoftLabelMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    GaussianBlobs {
        means: Vec<Vec<f64>>,
        sigma: f64,
        per_class: usize,
        labeled_per_class: usize,
    },
    TwoMoons {
        n: usize,
        noise: f64,
        labeled_per_class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<SyntheticDataset> {
        match &self.kind {
            GeneratorKind::GaussianBlobs {
                means,
                sigma,
                per_class,
                labeled_per_class,
            } => gen_gaussian_blobs(means, *sigma, *per_class, *labeled_per_class, self.seed),
            GeneratorKind::TwoMoons {
                n,
                noise,
                labeled_per_class,
            } => gen_two_moons(*n, *noise, *labeled_per_class, self.seed),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            kind: self.kind.clone(),
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.kind {
            GeneratorKind::GaussianBlobs { means, .. } => means.len(),
            GeneratorKind::TwoMoons { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: FeatureMatrix,
    pub true_class: Vec<usize>,
    pub labeled_mask: Vec<bool>,
    pub generator_spec: GeneratorSpec,
}

impl SyntheticDataset {
    /// Ground truth on labeled rows, `Unlabeled` elsewhere.
    pub fn assignments(&self) -> Vec<LabelAssignment> {
        self.true_class
            .iter()
            .zip(&self.labeled_mask)
            .map(|(&c, &l)| {
                if l {
                    LabelAssignment::GroundTruth(c)
                } else {
                    LabelAssignment::Unlabeled
                }
            })
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.generator_spec.num_classes()
    }

    pub fn rows(&self) -> usize {
        self.true_class.len()
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `per_class` isotropic Gaussian draws around each mean. Rows are grouped
/// by class in draw order; the first `labeled_per_class` draws of each class
/// are the labeled rows.
pub fn gen_gaussian_blobs(
    means: &[Vec<f64>],
    sigma: f64,
    per_class: usize,
    labeled_per_class: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    if means.is_empty() {
        return Err(Error::Empty("blob means"));
    }
    if per_class == 0 {
        return Err(Error::Empty("blob class with zero samples"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Degenerate(format!("sigma must be > 0, got {sigma}")));
    }
    if labeled_per_class > per_class {
        return Err(Error::CountTooLarge {
            requested: labeled_per_class,
            available: per_class,
        });
    }
    let dim = means[0].len();
    if let Some(bad) = means.iter().find(|m| m.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut rng = rng_for(seed);
    let n = means.len() * per_class;
    let mut data = Array2::zeros((n, dim));
    let mut true_class = Vec::with_capacity(n);
    let mut labeled_mask = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for s in 0..per_class {
            let row = c * per_class + s;
            for (d, mu) in mean.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                data[[row, d]] = mu + sigma * z;
            }
            true_class.push(c);
            labeled_mask.push(s < labeled_per_class);
        }
    }
    Ok(SyntheticDataset {
        features: FeatureMatrix::new(data)?,
        true_class,
        labeled_mask,
        generator_spec: GeneratorSpec {
            kind: GeneratorKind::GaussianBlobs {
                means: means.to_vec(),
                sigma,
                per_class,
                labeled_per_class,
            },
            seed,
        },
    })
}

/// Two interleaving unit half-circles. Class 0 is the upper arc
/// (cos t, sin t), class 1 the lower arc (1 − cos t, 1/2 − sin t), with t
/// evenly spaced over [0, π]; the first arc gets ⌊n/2⌋ points. Gaussian
/// noise of std `noise` is added to both coordinates. Labeled rows are a
/// seeded random subset of each class.
pub fn gen_two_moons(n: usize, noise: f64, labeled_per_class: usize, seed: u64) -> Result<SyntheticDataset> {
    if n < 2 {
        return Err(Error::CountTooLarge {
            requested: 2,
            available: n,
        });
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Degenerate(format!("noise must be >= 0, got {noise}")));
    }
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    if labeled_per_class > n_upper {
        return Err(Error::CountTooLarge {
            requested: labeled_per_class,
            available: n_upper,
        });
    }
    let spacing = |count: usize, i: usize| {
        if count == 1 {
            0.0
        } else {
            PI * i as f64 / (count - 1) as f64
        }
    };
    let mut rng = rng_for(seed);
    let mut data = Array2::zeros((n, 2));
    let mut true_class = Vec::with_capacity(n);
    for i in 0..n_upper {
        let t = spacing(n_upper, i);
        data[[i, 0]] = t.cos();
        data[[i, 1]] = t.sin();
        true_class.push(0);
    }
    for i in 0..n_lower {
        let t = spacing(n_lower, i);
        data[[n_upper + i, 0]] = 1.0 - t.cos();
        data[[n_upper + i, 1]] = 0.5 - t.sin();
        true_class.push(1);
    }
    if noise > 0.0 {
        for v in data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise * z;
        }
    }
    let mut labeled_mask = vec![false; n];
    for i in sample(&mut rng, n_upper, labeled_per_class) {
        labeled_mask[i] = true;
    }
    for i in sample(&mut rng, n_lower, labeled_per_class) {
        labeled_mask[n_upper + i] = true;
    }
    Ok(SyntheticDataset {
        features: FeatureMatrix::new(data)?,
        true_class,
        labeled_mask,
        generator_spec: GeneratorSpec {
            kind: GeneratorKind::TwoMoons {
                n,
                noise,
                labeled_per_class,
            },
            seed,
        },
    })
}

// ---------------------------------------------------------------------------
// Low-density crossing check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoremOneSetup {
    /// Distances between the two cluster means, ascending.
    pub separations: Vec<f64>,
    pub sigma: f64,
    pub samples_per_cluster: usize,
    pub dim: usize,
    /// Cross-cluster pairs drawn per separation.
    pub pairs: usize,
    /// Quantile of within-cluster densities used as the threshold.
    pub tau_quantile: f64,
    /// Evenly spaced points per connecting segment, endpoints included.
    pub line_points: usize,
}

impl Default for TheoremOneSetup {
    fn default() -> Self {
        Self {
            separations: vec![2.0, 4.0, 8.0, 16.0],
            sigma: 1.0,
            samples_per_cluster: 200,
            dim: 2,
            pairs: 200,
            tau_quantile: 0.1,
            line_points: 64,
        }
    }
}

pub const MIN_LINE_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremOneReport {
    pub separation: f64,
    pub tau_density: f64,
    /// Share of cross-cluster segments with at least one point at density ≤ τ.
    pub fraction_event_c: f64,
    /// Share of all segment points with density ≤ τ.
    pub fraction_low_density_length: f64,
}

/// For each separation, draws two Gaussian clusters that far apart, sets τ to
/// a low quantile of the within-cluster raw KDE densities, and measures how
/// often segments between random cross-cluster pairs dip to density ≤ τ.
/// KDE uses every row as support and `cfg.bandwidth_h` as bandwidth.
pub fn verify_theorem1(setup: &TheoremOneSetup, cfg: &PmlpConfig) -> Result<Vec<TheoremOneReport>> {
    if setup.samples_per_cluster < 1 {
        return Err(Error::Empty("cluster with no samples"));
    }
    if setup.separations.is_empty() {
        return Err(Error::Empty("separation list"));
    }
    if setup.separations.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Degenerate("separations must be ascending".into()));
    }
    if !(setup.tau_quantile > 0.0 && setup.tau_quantile < 1.0) {
        return Err(Error::Degenerate(format!(
            "tau_quantile must lie in (0, 1), got {}",
            setup.tau_quantile
        )));
    }
    if setup.line_points < MIN_LINE_POINTS {
        return Err(Error::CountTooLarge {
            requested: MIN_LINE_POINTS,
            available: setup.line_points,
        });
    }
    if setup.pairs == 0 || setup.dim == 0 {
        return Err(Error::Empty("pair count or dimension"));
    }
    setup
        .separations
        .iter()
        .enumerate()
        .map(|(idx, &sep)| theorem1_at(setup, cfg, sep, cfg.seed.wrapping_add(idx as u64)))
        .collect()
}

fn theorem1_at(setup: &TheoremOneSetup, cfg: &PmlpConfig, sep: f64, seed: u64) -> Result<TheoremOneReport> {
    let mut far = vec![0.0; setup.dim];
    far[0] = sep;
    let means = vec![vec![0.0; setup.dim], far];
    let ds = gen_gaussian_blobs(&means, setup.sigma, setup.samples_per_cluster, 0, seed)?;
    let h = cfg.bandwidth_h;

    let at_samples = full_kde(&ds.features, ds.features.view(), h)?;
    let mut sorted = at_samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let tau = quantile_sorted(&sorted, setup.tau_quantile);

    let mut rng = rng_for(seed ^ 0x9e37_79b9_7f4a_7c15);
    let per = setup.samples_per_cluster;
    let pairs: Vec<(usize, usize)> = (0..setup.pairs)
        .map(|_| (rng.random_range(0..per), per + rng.random_range(0..per)))
        .collect();

    let m = setup.line_points;
    let per_pair: Vec<(bool, usize)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let xi = ds.features.row(i);
            let xj = ds.features.row(j);
            let diff = &xj - &xi;
            let mut line = Array2::zeros((m, setup.dim));
            for (l, mut row) in line.axis_iter_mut(Axis(0)).enumerate() {
                let t = l as f64 / (m - 1) as f64;
                row.assign(&(&xi + &(&diff * t)));
            }
            let dens: Array1<f64> = full_kde(&ds.features, line.view(), h)?;
            let low = dens.iter().filter(|&&p| p <= tau).count();
            Ok((low > 0, low))
        })
        .collect::<Result<_>>()?;

    let events = per_pair.iter().filter(|(e, _)| *e).count();
    let low_points: usize = per_pair.iter().map(|(_, l)| l).sum();
    Ok(TheoremOneReport {
        separation: sep,
        tau_density: tau,
        fraction_event_c: events as f64 / pairs.len() as f64,
        fraction_low_density_length: low_points as f64 / (pairs.len() * m) as f64,
    })
}

// ---------------------------------------------------------------------------
// Mode comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Argmax accuracy on unlabeled rows.
    pub accuracy: f64,
    /// Share of unlabeled rows whose renormalized max score reaches τ.
    pub high_ratio: f64,
    /// Accuracy restricted to those rows; 0 when there are none.
    pub correct_high_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub trials: usize,
    pub mean_accuracy_pmlp: f64,
    pub mean_accuracy_lpa: f64,
    pub median_accuracy_pmlp: f64,
    pub median_accuracy_lpa: f64,
    /// Trials where PMLP's correct-high ratio is at least LPA's.
    pub correct_high_wins_pmlp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub records: Vec<TrialRecord>,
    pub summary: ComparisonSummary,
}

impl ComparisonReport {
    pub fn by_mode(&self, mode: Mode) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| r.mode == mode).collect()
    }
}

/// Label-quality metrics of `final_labels` against the truth, over unlabeled rows.
pub fn score_labels(final_labels: &SoftLabelMatrix, ds: &SyntheticDataset, tau: f64) -> (f64, f64, f64) {
    let normalized = final_labels.row_normalized();
    let (mut total, mut correct, mut high, mut high_correct) = (0usize, 0usize, 0usize, 0usize);
    for t in 0..ds.rows() {
        if ds.labeled_mask[t] {
            continue;
        }
        total += 1;
        let ok = normalized.argmax(t) == Some(ds.true_class[t]);
        correct += usize::from(ok);
        if normalized.row_max(t) >= tau {
            high += 1;
            high_correct += usize::from(ok);
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(correct, total), frac(high, total), frac(high_correct, high))
}

fn run_trial(spec: &GeneratorSpec, cfg: &PmlpConfig, trial: usize) -> Result<[TrialRecord; 2]> {
    let seed = spec.seed.wrapping_add(trial as u64);
    let ds = spec.with_seed(seed).generate()?;
    let assignments = ds.assignments();
    let mut out = Vec::with_capacity(2);
    for mode in [Mode::Pmlp, Mode::ClassicalLpa] {
        let run_cfg = PmlpConfig {
            mode,
            seed,
            ..cfg.clone()
        };
        let result = run_pmlp_with_classes(&ds.features, &assignments, Some(ds.num_classes()), &run_cfg)?;
        let (accuracy, high_ratio, correct_high_ratio) = score_labels(&result.final_labels, &ds, cfg.tau);
        out.push(TrialRecord {
            trial,
            seed,
            mode,
            accuracy,
            high_ratio,
            correct_high_ratio,
        });
    }
    let lpa = out.pop().expect("two modes");
    let pmlp = out.pop().expect("two modes");
    Ok([pmlp, lpa])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

/// Runs both modes on `trials` datasets regenerated from `spec` with seeds
/// `spec.seed + t`. Trials run in parallel and are merged in trial order.
pub fn compare_pmlp_vs_lpa(spec: &GeneratorSpec, cfg: &PmlpConfig, trials: usize) -> Result<ComparisonReport> {
    if trials == 0 {
        return Err(Error::Empty("trial count"));
    }
    let per_trial: Vec<[TrialRecord; 2]> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(spec, cfg, t))
        .collect::<Result<_>>()?;

    let acc = |idx: usize| per_trial.iter().map(|p| p[idx].accuracy).collect::<Vec<_>>();
    let (acc_p, acc_l) = (acc(0), acc(1));
    let wins = per_trial
        .iter()
        .filter(|p| p[0].correct_high_ratio >= p[1].correct_high_ratio)
        .count();
    let summary = ComparisonSummary {
        trials,
        mean_accuracy_pmlp: mean(&acc_p),
        mean_accuracy_lpa: mean(&acc_l),
        median_accuracy_pmlp: median(&acc_p),
        median_accuracy_lpa: median(&acc_l),
        correct_high_wins_pmlp: wins,
    };
    Ok(ComparisonReport {
        records: per_trial.into_iter().flatten().collect(),
        summary,
    })
}

// ---------------------------------------------------------------------------
// Bandwidth sweep of the density ratio
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRatioPoint {
    pub bandwidth_h: f64,
    pub ratio: f64,
}

/// Random distinct row pairs, reproducible from `seed`.
pub fn sample_pairs(rows: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if rows < 2 {
        return Err(Error::Degenerate("need at least 2 rows to form pairs".into()));
    }
    let mut rng = rng_for(seed);
    Ok((0..count)
        .map(|_| {
            let i = rng.random_range(0..rows);
            let mut j = rng.random_range(0..rows - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect())
}

/// R_h at each bandwidth over one fixed set of sampled pairs.
pub fn density_ratio_sweep(
    features: &FeatureMatrix,
    bandwidths: &[f64],
    pair_count: usize,
    cfg: &PmlpConfig,
) -> Result<Vec<DensityRatioPoint>> {
    let pairs = sample_pairs(features.rows(), pair_count, cfg.seed)?;
    bandwidths
        .iter()
        .map(|&h| {
            let c = PmlpConfig {
                bandwidth_h: h,
                ..cfg.clone()
            };
            Ok(DensityRatioPoint {
                bandwidth_h: h,
                ratio: density_ratio(features, &pairs, &c)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_class_rejected() {
        let r = gen_gaussian_blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], 1.0, 0, 0, 1);
        assert!(r.is_err());
        assert!(gen_gaussian_blobs(&[vec![0.0]], 1.0, 3, 4, 1).is_err());
        assert!(gen_gaussian_blobs(&[vec![0.0]], 0.0, 3, 1, 1).is_err());
    }

    #[test]
    fn blobs_deterministic() {
        let a = gen_gaussian_blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], 0.5, 50, 2, 42).unwrap();
        let b = gen_gaussian_blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], 0.5, 50, 2, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generator_spec.generate().unwrap(), a);
        let c = gen_gaussian_blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], 0.5, 50, 2, 43).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn blob_means_within_three_standard_errors() {
        let sigma = 0.5;
        let per = 400;
        let means = [vec![0.0, 0.0], vec![10.0, 0.0]];
        let ds = gen_gaussian_blobs(&means, sigma, per, 1, 7).unwrap();
        let bound = 3.0 * sigma / (per as f64).sqrt();
        for (c, mu) in means.iter().enumerate() {
            let block = ds
                .features
                .view()
                .slice_move(ndarray::s![c * per..(c + 1) * per, ..])
                .to_owned();
            let m = block.mean_axis(Axis(0)).unwrap();
            for d in 0..2 {
                assert!((m[d] - mu[d]).abs() < bound, "class {c} dim {d}: {} vs {}", m[d], mu[d]);
            }
        }
    }

    #[test]
    fn labeled_rows_per_class() {
        let ds = gen_gaussian_blobs(&[vec![0.0], vec![5.0], vec![9.0]], 1.0, 10, 3, 1).unwrap();
        for c in 0..3 {
            let k = (0..ds.rows())
                .filter(|&t| ds.labeled_mask[t] && ds.true_class[t] == c)
                .count();
            assert_eq!(k, 3);
        }
    }

    #[test]
    fn noiseless_moons_on_arcs() {
        let ds = gen_two_moons(101, 0.0, 2, 3).unwrap();
        for t in 0..ds.rows() {
            let (x, y) = (ds.features.row(t)[0], ds.features.row(t)[1]);
            if ds.true_class[t] == 0 {
                assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-12);
                assert!(y >= -1e-12);
            } else {
                assert!((((x - 1.0).powi(2) + (y - 0.5).powi(2)).sqrt() - 1.0).abs() < 1e-12);
                assert!(y <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_deterministic_and_offset() {
        let a = gen_two_moons(1000, 0.1, 2, 11).unwrap();
        assert_eq!(a, gen_two_moons(1000, 0.1, 2, 11).unwrap());
        let centroid = |c: usize| {
            let rows: Vec<usize> = (0..a.rows()).filter(|&t| a.true_class[t] == c).collect();
            a.features.view().select(Axis(0), &rows).mean_axis(Axis(0)).unwrap()
        };
        let (c0, c1) = (centroid(0), centroid(1));
        assert!((c0[0] - c1[0]).abs() > 0.4);
        assert!((c0[1] - c1[1]).abs() > 0.4);
        assert_eq!(a.labeled_mask.iter().filter(|&&l| l).count(), 4);
    }

    #[test]
    fn moons_reject_bad_input() {
        assert!(gen_two_moons(1, 0.1, 0, 0).is_err());
        assert!(gen_two_moons(10, -0.1, 1, 0).is_err());
        assert!(gen_two_moons(10, 0.1, 6, 0).is_err());
    }

    #[test]
    fn theorem1_rejects_bad_setup() {
        let cfg = PmlpConfig {
            bandwidth_h: 1.0,
            ..PmlpConfig::default()
        };
        let bad = TheoremOneSetup {
            samples_per_cluster: 0,
            ..TheoremOneSetup::default()
        };
        assert!(verify_theorem1(&bad, &cfg).is_err());
        let bad = TheoremOneSetup {
            separations: vec![4.0, 2.0],
            ..TheoremOneSetup::default()
        };
        assert!(verify_theorem1(&bad, &cfg).is_err());
        let bad = TheoremOneSetup {
            line_points: 10,
            ..TheoremOneSetup::default()
        };
        assert!(verify_theorem1(&bad, &cfg).is_err());
    }

    #[test]
    fn pairs_are_distinct_and_reproducible() {
        let p = sample_pairs(5, 200, 9).unwrap();
        assert!(p.iter().all(|&(i, j)| i != j && i < 5 && j < 5));
        assert_eq!(p, sample_pairs(5, 200, 9).unwrap());
    }
}

//! Hyperparameters for the propagation pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};

/// How the k path densities of a pair are collapsed into one number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Min,
    Max,
    Avg,
    /// t-quantile with linear interpolation; 0.5 is the median.
    Quantile(f64),
}

/// The base measure D(a, b) the affinity is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Euclidean distance, inverted when turned into an affinity.
    EuclideanInverse,
    CosineSimilarity,
    /// Inner product of the two feature vectors.
    FirstOrderSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    ClosedForm,
    Iterative { max_iters: usize, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Affinities reweighted by path density.
    Pmlp,
    /// Plain label propagation, density weight fixed to 1.
    ClassicalLpa,
}

/// Scaling applied to the direct solve of (I - αS) Y' = Y_high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormScaling {
    /// The raw inverse applied to Y_high.
    PaperClosedForm,
    /// (1 - α) times the inverse: the fixed point of the iteration.
    IterativeFixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmlpConfig {
    pub alpha: f64,
    pub eta: f64,
    pub tau: f64,
    pub bandwidth_h: f64,
    pub path_points_k: usize,
    pub kde_support_n: usize,
    /// `None` applies the ⌈1.5 · C⌉ rule once the class count is known.
    pub neighbor_count: Option<usize>,
    pub aggregator: Aggregator,
    pub distance_mode: DistanceMode,
    pub solver: Solver,
    pub mode: Mode,
    pub closed_form_scaling: ClosedFormScaling,
    /// Reset ground-truth rows to one-hot after propagation.
    pub clamp_ground_truth: bool,
    /// Rescale every nonzero row of the final labels to unit mass.
    pub renormalize_output: bool,
    pub seed: u64,
}

impl Default for PmlpConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            eta: 0.2,
            tau: 0.95,
            bandwidth_h: 5.0,
            path_points_k: 1,
            kde_support_n: 45,
            neighbor_count: None,
            aggregator: Aggregator::Avg,
            distance_mode: DistanceMode::EuclideanInverse,
            solver: Solver::Iterative {
                max_iters: 1000,
                tol: 1e-10,
            },
            mode: Mode::Pmlp,
            closed_form_scaling: ClosedFormScaling::IterativeFixedPoint,
            clamp_ground_truth: true,
            renormalize_output: false,
            seed: 0,
        }
    }
}

/// ⌈1.5 · C⌉ neighbors for a C-class problem.
pub fn default_neighbor_count(num_classes: usize) -> usize {
    (3 * num_classes).div_ceil(2)
}

/// Returns `cfg` unchanged when every field is in range.
pub fn validate_config(cfg: PmlpConfig) -> Result<PmlpConfig> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(ConfigError::Alpha(cfg.alpha).into());
    }
    if !(0.0..=1.0).contains(&cfg.eta) {
        return Err(ConfigError::Eta(cfg.eta).into());
    }
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(ConfigError::Tau(cfg.tau).into());
    }
    if !(cfg.bandwidth_h.is_finite() && cfg.bandwidth_h > 0.0) {
        return Err(ConfigError::Bandwidth(cfg.bandwidth_h).into());
    }
    if cfg.path_points_k == 0 {
        return Err(ConfigError::PathPoints.into());
    }
    if cfg.kde_support_n == 0 {
        return Err(ConfigError::KdeSupport.into());
    }
    if cfg.neighbor_count == Some(0) {
        return Err(ConfigError::NeighborCount.into());
    }
    if let Aggregator::Quantile(t) = cfg.aggregator {
        if !(t > 0.0 && t < 1.0) {
            return Err(ConfigError::Quantile(t).into());
        }
    }
    if let Solver::Iterative { max_iters, tol } = cfg.solver {
        if max_iters == 0 {
            return Err(ConfigError::MaxIters.into());
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(ConfigError::Tolerance(tol).into());
        }
    }
    Ok(cfg)
}

impl PmlpConfig {
    pub fn validated(self) -> Result<Self> {
        validate_config(self)
    }

    pub fn neighbor_count_for(&self, num_classes: usize) -> usize {
        self.neighbor_count
            .unwrap_or_else(|| default_neighbor_count(num_classes))
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Min => f.write_str("min"),
            Aggregator::Max => f.write_str("max"),
            Aggregator::Avg => f.write_str("avg"),
            Aggregator::Quantile(t) => write!(f, "quantile:{t}"),
        }
    }
}

impl FromStr for Aggregator {
    type Err = String;

    /// Accepts `min`, `max`, `avg`, `median` and `quantile:<t>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min" => Ok(Aggregator::Min),
            "max" => Ok(Aggregator::Max),
            "avg" | "mean" => Ok(Aggregator::Avg),
            "median" => Ok(Aggregator::Quantile(0.5)),
            other => {
                let t = other
                    .strip_prefix("quantile:")
                    .ok_or_else(|| format!("unknown aggregator `{s}`"))?;
                t.parse::<f64>()
                    .map(Aggregator::Quantile)
                    .map_err(|e| format!("bad quantile `{t}`: {e}"))
            }
        }
    }
}

impl FromStr for DistanceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "euclidean-inverse" | "euclidean" => Ok(DistanceMode::EuclideanInverse),
            "cosine-similarity" | "cosine" => Ok(DistanceMode::CosineSimilarity),
            "first-order-similarity" | "first-order" | "dot" => Ok(DistanceMode::FirstOrderSimilarity),
            _ => Err(format!("unknown distance mode `{s}`")),
        }
    }
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Pmlp => "pmlp",
            Mode::ClassicalLpa => "classical_lpa",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "pmlp" => Ok(Mode::Pmlp),
            "classical-lpa" | "lpa" => Ok(Mode::ClassicalLpa),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

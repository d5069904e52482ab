//! Density-aware label propagation.
//!
//! Given feature vectors with a few labels, `pmlp-core` builds a KNN affinity
//! graph whose edge weights are the inverse distance (or a similarity)
//! multiplied by the kernel density along the segment joining the two
//! endpoints, then propagates labels over the normalized graph. Edges that
//! cross a low-density gap between clusters are damped, so labels tend to
//! stay inside the cluster they started in. With the density weight fixed to
//! one (or the bandwidth sent to infinity) the pipeline reduces to classical
//! label propagation.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`types`] | feature, label and affinity containers |
//! | [`config`] | hyperparameters and validation |
//! | [`distance`] | base measures |
//! | [`density`] | path sampling, KDE, aggregation, density ratio |
//! | [`graph`] | KNN, affinity construction, normalization |
//! | [`propagate`] | confidence split, solvers, mixing, the full pipeline |
//! | [`threshold`] | adaptive confidence threshold |
//! | [`synthlab`] | seeded generators and statistical checks |

pub mod config;
pub mod density;
pub mod distance;
pub mod error;
pub mod graph;
pub mod propagate;
pub mod synthlab;
pub mod threshold;
pub mod types;

pub use config::{
    default_neighbor_count, validate_config, Aggregator, ClosedFormScaling, DistanceMode, Mode, PmlpConfig, Solver,
};
pub use error::{ConfigError, Error, Result};
pub use propagate::{run_pmlp, run_pmlp_with_classes, PropagationResult};
pub use types::{AffinityMatrix, FeatureMatrix, LabelAssignment, SoftLabelMatrix, MAX_ROWS};

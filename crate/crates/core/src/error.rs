use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Out-of-range configuration fields. Each field gets its own variant so
/// callers can report exactly which knob was wrong.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("eta must lie in [0, 1], got {0}")]
    Eta(f64),
    #[error("tau must lie in (0, 1], got {0}")]
    Tau(f64),
    #[error("bandwidth_h must be finite and > 0, got {0}")]
    Bandwidth(f64),
    #[error("path_points_k must be >= 1")]
    PathPoints,
    #[error("kde_support_n must be >= 1")]
    KdeSupport,
    #[error("neighbor_count must be >= 1")]
    NeighborCount,
    #[error("quantile t must lie in (0, 1), got {0}")]
    Quantile(f64),
    #[error("iterative solver needs max_iters >= 1")]
    MaxIters,
    #[error("iterative solver tolerance must be finite and > 0, got {0}")]
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative entry in {0}")]
    Negative(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },

    #[error("path endpoints coincide (row {0})")]
    IdenticalEndpoints(usize),

    #[error("bandwidth must be finite and > 0, got {0}")]
    Bandwidth(f64),

    #[error("requested {requested} points but only {available} are available")]
    CountTooLarge { requested: usize, available: usize },

    #[error("duplicate node index {0} in node set")]
    DuplicateNode(usize),

    #[error("row {0} has zero degree (isolated node); increase neighbor_count")]
    IsolatedNode(usize),

    #[error("invalid label at row {row}: {reason}")]
    InvalidLabel { row: usize, reason: String },

    #[error("no ground-truth labels supplied")]
    NoGroundTruth,

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("no high-confidence rows after the confidence split; lower tau")]
    EmptyHighConfidenceSet,

    #[error("zero path density encountered; density ratio undefined")]
    ZeroDensity,

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("dataset has {0} rows, above the dense-storage ceiling of {1}")]
    TooManyRows(usize, usize),
}

impl Error {
    /// True for failures that come from the arithmetic rather than from the
    /// shape or content of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Solver(_) | Error::ZeroDensity | Error::IsolatedNode(_)
        )
    }

    /// Stable machine-readable code, used in job metrics files.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Negative(_) => "negative_entry",
            Error::Empty(_) => "empty_input",
            Error::Degenerate(_) => "degenerate_input",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::IdenticalEndpoints(_) => "identical_endpoints",
            Error::Bandwidth(_) => "invalid_bandwidth",
            Error::CountTooLarge { .. } => "count_too_large",
            Error::DuplicateNode(_) => "duplicate_node",
            Error::IsolatedNode(_) => "isolated_node",
            Error::InvalidLabel { .. } => "invalid_label",
            Error::NoGroundTruth => "no_ground_truth",
            Error::TooFewClasses(_) => "too_few_classes",
            Error::EmptyHighConfidenceSet => "empty_high_confidence_set",
            Error::ZeroDensity => "zero_density",
            Error::Solver(_) => "solver_failure",
            Error::TooManyRows(..) => "too_many_rows",
        }
    }
}

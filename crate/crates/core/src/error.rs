use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-convex domain: {0}")]
    NonConvex(String),

    #[error("N = {n} is not admissible for the {scheme} partition; nearby admissible values: {admissible:?}")]
    PartitionSize { n: usize, scheme: String, admissible: Vec<usize> },

    #[error("map value for cell {cell} is not finite")]
    NonFinite { cell: usize },

    #[error("points {i} and {j} coincide (within {tol:e}); jitter the map off the diagonal")]
    CoincidentPoints { i: usize, j: usize, tol: f64 },

    #[error("transport solver did not converge after {iterations} Newton steps (mass residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("maps are defined on different partitions ({expected} vs {found} cells)")]
    PartitionMismatch { expected: usize, found: usize },

    #[error("particle left the domain by {excess:e} during flow integration")]
    LeftDomain { excess: f64 },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the caller's configuration rather than by a failed
    /// computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::NonConvex(_) | Error::PartitionSize { .. } | Error::PartitionMismatch { .. }
        )
    }

    /// Stable snake-case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NonConvex(_) => "non_convex",
            Error::PartitionSize { .. } => "partition_size",
            Error::NonFinite { .. } => "non_finite",
            Error::CoincidentPoints { .. } => "coincident_points",
            Error::NoConvergence { .. } => "no_convergence",
            Error::PartitionMismatch { .. } => "partition_mismatch",
            Error::LeftDomain { .. } => "left_domain",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

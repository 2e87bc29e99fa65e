use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised while validating data or fitting models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset needs at least 2 records, got {0}")]
    TooFewRecords(usize),

    #[error("record {index}: covariate vector has length {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("record {index}: field `{field}` is not finite")]
    NonFinite { index: usize, field: &'static str },

    #[error("record {index}: field `{field}` is negative")]
    NegativeTime { index: usize, field: &'static str },

    #[error("record {index}: indicator `{field}` must be 0 or 1, got {value}")]
    IndicatorDomain {
        index: usize,
        field: &'static str,
        value: u8,
    },

    #[error("no outcome events (every status is 0)")]
    NoEvents,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("no observed covariate values (every covariate status is 0)")]
    NoObservedCovariate,

    #[error("no observed covariate value exceeds the censored value {z}")]
    EmptyQualifyingSet { z: f64 },

    #[error("every subject was excluded from the likelihood")]
    AllSubjectsExcluded,

    #[error("log partial likelihood is not finite")]
    NonFiniteLikelihood,

    #[error("Newton-Raphson did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("information matrix is singular at iteration {iteration}")]
    SingularHessian { iteration: usize },

    #[error("monotone likelihood: parameter {parameter} diverges while the log likelihood has converged")]
    MonotoneLikelihood { parameter: usize },

    #[error("complete-case subset has no usable events")]
    EmptySubset,

    #[error("parameter {index} has zero or undefined variance")]
    ZeroVariance { index: usize },

    #[error("parameter index {index} out of range for dimension {dim}")]
    ParameterIndex { index: usize, dim: usize },

    #[error("censoring rate {target} cannot be reached by the censoring family")]
    NonBracketing { target: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("every reduced-model treatment estimate is below the degeneracy threshold")]
    AllDegenerate,

    #[error("no censored observations")]
    NoCensoring,

    #[error("no successful fits for subset size {size}, method {method}")]
    EmptyCell { size: usize, method: String },
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::TooFewRecords(_) => "too_few_records",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::NegativeTime { .. } => "negative_time",
            Error::IndicatorDomain { .. } => "indicator_domain",
            Error::NoEvents => "no_events",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NoObservedCovariate => "no_observed_covariate",
            Error::EmptyQualifyingSet { .. } => "empty_qualifying_set",
            Error::AllSubjectsExcluded => "all_subjects_excluded",
            Error::NonFiniteLikelihood => "non_finite_likelihood",
            Error::NonConvergence { .. } => "non_convergence",
            Error::SingularHessian { .. } => "singular_hessian",
            Error::MonotoneLikelihood { .. } => "monotone_likelihood",
            Error::EmptySubset => "empty_subset",
            Error::ZeroVariance { .. } => "zero_variance",
            Error::ParameterIndex { .. } => "parameter_index",
            Error::NonBracketing { .. } => "non_bracketing",
            Error::InvalidConfig(_) => "invalid_config",
            Error::MissingColumn(_) => "missing_column",
            Error::AllDegenerate => "all_degenerate",
            Error::NoCensoring => "no_censoring",
            Error::EmptyCell { .. } => "empty_cell",
        }
    }
}

use thiserror::Error;

use crate::model::MetricViolation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid metric: {} violated constraint(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidMetric(Vec<MetricViolation>),

    #[error("probability out of range at index {index}: {value}")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("element {0} is already classified")]
    AlreadyClassified(usize),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("metric is trivial (all distances in {{0, 1}})")]
    TrivialMetric,

    #[error("{what} needs at most {limit}, got {actual}")]
    TooLarge {
        what: &'static str,
        limit: usize,
        actual: usize,
    },

    #[error("quota infeasible by counting: {0}")]
    QuotaInfeasible(String),

    #[error("subset audit failed: {0} pair(s) of the external classifier violate the metric")]
    SubsetAuditFailed(usize),

    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} index {index} is out of range for dimension {dim}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        dim: usize,
    },

    #[error("model failed validation with {} violation(s): {}", .0.len(), join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("dual variable {index} is negative ({value})")]
    NegativeDual { index: usize, value: f64 },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("oracle enumeration budget exceeded: {0}")]
    OracleBudget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("inference failed for sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn for_sample(self, sample: usize) -> Self {
        Error::Sample {
            sample,
            source: Box::new(self),
        }
    }
}

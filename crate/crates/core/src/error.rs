use alloc::string::String;

use crate::domain::ContractId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown {field} level {value}")]
    UnknownLevel { field: &'static str, value: u8 },
    #[error("column `{column}` has zero variance in the training split")]
    DegenerateColumn { column: &'static str },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },
    #[error("estimator `{estimator}` produced a non-finite prediction at t = {t}")]
    NonFinitePrediction { estimator: String, t: f64 },
    #[error("contract {0} is not in the test split")]
    NotTestContract(ContractId),
    #[error("contract ids do not align: {0}")]
    IdMismatch(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("population is empty")]
    EmptyPopulation,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

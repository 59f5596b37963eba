use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix of dimension {dim} is not positive definite after jitter escalation (last jitter {last_jitter:e})")]
    NotFactorizable { dim: usize, last_jitter: f64 },

    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("input file contains no data rows")]
    EmptyFile,

    #[error("invalid group count {groups} for {points} points")]
    InvalidGroupCount { groups: usize, points: usize },

    #[error("invalid aggregation tree: {0}")]
    InvalidTree(String),

    #[error("invalid tree height {0}: at least 2 layers are required")]
    InvalidHeight(usize),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("non-positive predicted variance at index {index}")]
    NonPositiveVariance { index: usize },

    #[error("removing point {index} would empty its group")]
    EmptyGroupAfterDeletion { index: usize },

    #[error("criterion is not finite")]
    NonFiniteCriterion,

    #[error("full model refused: {n} observations exceed the cap of {cap} (cost grows as n^3)")]
    CapExceeded { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid model bundle: {0}")]
    Bundle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical core, as opposed to input or I/O problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotFactorizable { .. }
                | Error::NotSymmetric { .. }
                | Error::NonPositiveVariance { .. }
                | Error::NonFiniteCriterion
        )
    }

    /// Process exit status: 1 usage or configuration, 2 input/output, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            e if e.is_numerical() => 3,
            Error::Config(_) | Error::CapExceeded { .. } | Error::InvalidHeight(_) => 1,
            _ => 2,
        }
    }
}

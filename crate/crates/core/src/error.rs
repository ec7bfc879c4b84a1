use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),

    #[error("step size {alpha} outside (0, {max}) required by maximum degree {max_degree}")]
    AlphaOutOfRange {
        alpha: f64,
        max: f64,
        max_degree: usize,
    },

    #[error("topology is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("estimates diverged at iteration {t}")]
    Diverged { t: u64 },

    #[error("data source is empty")]
    EmptyPool,

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("column `{0}` not present in header")]
    MissingColumn(String),

    #[error("no usable rows after dropping non-numeric or missing values")]
    NoUsableRows,

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed edge list at line {line}: {message}")]
    EdgeList { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidAdjacency(_) => "invalid_adjacency",
            Error::AlphaOutOfRange { .. } => "alpha_out_of_range",
            Error::Disconnected { .. } => "disconnected",
            Error::Diverged { .. } => "diverged",
            Error::EmptyPool => "empty_pool",
            Error::MissingFile(_) => "missing_file",
            Error::MissingColumn(_) => "missing_column",
            Error::NoUsableRows => "no_usable_rows",
            Error::ZeroVariance(_) => "zero_variance",
            Error::Config(_) => "config",
            Error::EdgeList { .. } => "edge_list",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

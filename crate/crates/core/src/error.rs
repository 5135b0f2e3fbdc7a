use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("ragged rows: line {line} has {found} coordinates, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite coordinate at point {point}, axis {axis}")]
    NonFiniteCoordinate { point: usize, axis: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cardinality mismatch: |P| = {left}, |Q| = {right} (equal sizes required)")]
    CardinalityMismatch { left: usize, right: usize },
    #[error("brute-force enumeration supports at most {max} points, got {n}")]
    TooLargeForBruteForce { n: usize, max: usize },
    #[error("order p = {0} is not supported here (only 1 and 2)")]
    UnsupportedOrder(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("direction set is empty")]
    EmptyDirectionSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sinkhorn did not converge after {iters} iterations (marginal violation {violation:e}, partial value {value})")]
    NotConverged {
        iters: usize,
        violation: f64,
        value: f64,
    },
    #[error("loss became non-finite at iteration {iteration}; reduce the step size")]
    DivergedLoss { iteration: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_same_dim(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

pub(crate) fn check_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::CardinalityMismatch { left, right });
    }
    Ok(())
}

use std::path::PathBuf;

use thiserror::Error;

use crate::qr::QuantileFit;

/// Errors raised while loading or validating input data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("need at least 2 data rows, found {0}")]
    TooFewRows(usize),
    #[error("need at least one covariate column")]
    NoCovariates,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

/// Errors raised by the quantile regression solvers.
#[derive(Debug, Error)]
pub enum QrError {
    #[error("quantile level {0} outside (0, 1)")]
    BadTau(f64),
    #[error("penalty level must be finite and non-negative, got {0}")]
    BadLambda(f64),
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("unpenalized fit needs n > p + 1 (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design is rank deficient")]
    RankDeficient,
    #[error("expected a covariate vector of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("solver did not reach the optimality certificate within {} iterations (kkt residual {:.3e})", .fit.n_iter, .fit.kkt_residual)]
    NotConverged { fit: Box<QuantileFit> },
}

/// Errors raised by the tail machinery, tuning and baselines.
#[derive(Debug, Error)]
pub enum TailError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("nonpositive fitted ladder quantile {value:.6e} at level {tau}; increase k")]
    NonPositiveQuantile { tau: f64, value: f64 },
    #[error("base quantile {0:.6e} is not positive; extrapolation needs a positive intermediate quantile")]
    NonPositiveBase(f64),
    #[error("extreme level {tau_n} is below the intermediate level {tau0}")]
    LevelBelowIntermediate { tau_n: f64, tau0: f64 },
    #[error("EQR not applicable: n = {n} must exceed p + 1 = {}", .p + 1)]
    EqrNotApplicable { n: usize, p: usize },
    #[error("every penalty on the cross-validation grid failed")]
    AllLambdasFailed,
    #[error(transparent)]
    Solver(#[from] QrError),
}

/// Errors raised by the simulation driver.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error("{failed} of {total} replications failed (limit 5%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Tail(#[from] TailError),
    #[error(transparent)]
    Solver(#[from] QrError),
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PovError {
    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error(
        "infeasible order: maxPoV * V1 = {capacity:.3} < |X1| = {required:.3} \
         (compatibility requires maxPoV >= |X1| / V1 = {min_pov:.6})"
    )]
    Infeasible {
        capacity: f64,
        required: f64,
        min_pov: f64,
    },

    #[error("rank-deficient design (condition number {condition:.3e}): features {first} and {second} are nearly collinear")]
    RankDeficient {
        condition: f64,
        first: &'static str,
        second: &'static str,
    },

    #[error("trade rejected: {0}")]
    Filtered(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PovError>;

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotRotation(f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point cloud is degenerate: {0}")]
    DegenerateCloud(String),

    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),

    #[error("start pose is in collision")]
    StartInCollision,

    #[error("goal pose is in collision")]
    GoalInCollision,

    #[error("no connection found within {0} iterations")]
    BudgetExhausted(usize),

    #[error("path is empty")]
    EmptyPath,

    #[error("path has zero length")]
    DegeneratePath,

    #[error("expected {expected} numbers, got {got}")]
    BadLength { expected: usize, got: usize },

    #[error("scale is degenerate: z0 - dz = {0:.4} m")]
    DegenerateScale(f64),

    #[error("augmented view leaves the image")]
    OutOfView,

    #[error("no in-view augmentation found after {0} draws")]
    RejectionBudgetExhausted(usize),

    #[error("frame mismatch: trajectory in '{trajectory}', cloud in '{cloud}'")]
    FrameMismatch { trajectory: String, cloud: String },

    #[error("invalid shoe parameters: {0}")]
    InvalidParams(String),

    #[error("cloud lies behind camera in view {0}")]
    CloudBehindCamera(usize),

    #[error("image dimensions mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

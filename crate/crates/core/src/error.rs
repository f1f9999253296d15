use std::path::PathBuf;

use thiserror::Error;

use crate::config::TokenGrouping;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid image dimensions {width}x{height}")]
    InvalidDims { width: u32, height: u32 },

    #[error("image is {actual_w}x{actual_h} but the plan was made for {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("invalid partition plan: {0}")]
    InvalidPlan(String),

    #[error("shape mismatch in {what}: expected {expected:?}, got {actual:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("{rows} tokens cannot be compressed four-fold with {grouping:?} grouping")]
    NotCompressible { rows: usize, grouping: TokenGrouping },

    #[error("expected {expected} local feature blocks, got {actual}")]
    PatchCountMismatch { expected: usize, actual: usize },

    #[error("position id {id} has no row in a position table of {rows} rows")]
    PositionOutOfRange { id: u32, rows: usize },

    #[error("loss is not finite")]
    NonFiniteLoss,

    #[error("finite-difference step {0} is outside (0, 1e-2]")]
    InvalidEpsilon(f64),

    #[error("no decodable PNG or JPEG images in {}", .0.display())]
    EmptyCorpus(PathBuf),

    #[error("unknown baseline {0:?} (expected llava or monkey)")]
    UnknownBaseline(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

//! DEM rasterization and the two height-error metrics: median absolute
//! error and completeness at a threshold.

mod align;
mod dem;
mod io;
mod metrics;

pub use align::{align_dems, shift_score, DemAlignment};
pub use dem::{rasterize, DemGrid};
pub use io::{read_asc, write_asc, write_error_pgm16, ASC_NODATA};
pub use metrics::{completeness, error_map, median_error, ErrorMap};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("grid frames differ: {0}")]
    GridMismatch(String),
    #[error("no overlapping valid cells")]
    NoOverlap,
    #[error("error map has no valid cells")]
    EmptyMap,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed grid {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::GridMismatch(_) => "GridMismatch",
            EvalError::NoOverlap => "NoOverlap",
            EvalError::EmptyMap => "EmptyMap",
            EvalError::InvalidInput(_) => "InvalidInput",
            EvalError::Format { .. } => "FormatError",
            EvalError::Io { .. } => "IoError",
        }
    }
}

/// Lower median (element `(n - 1) / 2` of the sorted values).
pub(crate) fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

//! Ground-truthed synthetic scenes under a linear pushbroom acquisition
//! model: terrain with box buildings, rendered images, exact sparse and
//! dense correspondences, GCPs and a truth DEM.

mod affine_fit;
mod camera;
mod generate;
mod terrain;

pub use affine_fit::{affine_fit_residual, Region};
pub use camera::{project_pushbroom, CrossTrack, PushbroomCamera};
pub use generate::{
    acceptance_options, acceptance_spec, generate_scene, stereo_cameras, write_dataset, DatasetManifest,
    GroundTruth, ImageSpec, SynthOptions, SyntheticDataset, DATASET_SCHEMA,
};
pub use terrain::{Building, SceneSpec, Terrain};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("point projects outside the sensor's rows or behind it")]
    BehindSensor,
    #[error("invalid scene configuration: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl SyntheticError {
    pub fn kind(&self) -> &'static str {
        match self {
            SyntheticError::BehindSensor => "BehindSensor",
            SyntheticError::ConfigError(_) => "ConfigError",
            SyntheticError::Geometry(g) => g.kind(),
            SyntheticError::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: &std::path::Path, reason: impl ToString) -> Self {
        SyntheticError::Io {
            path: path.display().to_string(),
            reason: reason.to_string(),
        }
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Reconstruction, SfmError};
use crate::geometry::{AffineCamera, Point2, Point3};

/// Version written to and required from the `schema_version` field.
pub const CHECKPOINT_SCHEMA: u32 = 1;

/// On-disk layout. Cameras are `[m00, m01, m02, m10, m11, m12, t0, t1]`,
/// points `[x, y, z]`, observations `[tile, x, y]`.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    group_id: String,
    registration_order: Vec<String>,
    cameras: BTreeMap<String, [f64; 8]>,
    points: BTreeMap<usize, [f64; 3]>,
    observations: BTreeMap<usize, Vec<(String, f64, f64)>>,
    rejected: Vec<(usize, String)>,
    tile_images: BTreeMap<String, String>,
    tile_grid: BTreeMap<String, (usize, usize)>,
}

pub fn save_checkpoint(recon: &Reconstruction, path: &Path) -> Result<(), SfmError> {
    let file = CheckpointFile {
        schema_version: CHECKPOINT_SCHEMA,
        group_id: recon.group_id.clone(),
        registration_order: recon.registration_order.clone(),
        cameras: recon.cameras.iter().map(|(k, c)| (k.clone(), c.to_params())).collect(),
        points: recon.points.iter().map(|(k, p)| (*k, [p.x, p.y, p.z])).collect(),
        observations: recon
            .observations
            .iter()
            .map(|(k, obs)| (*k, obs.iter().map(|(t, p)| (t.clone(), p.x, p.y)).collect()))
            .collect(),
        rejected: recon.rejected.iter().cloned().collect(),
        tile_images: recon.tile_images.clone(),
        tile_grid: recon.tile_grid.clone(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| SfmError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| SfmError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Reconstruction, SfmError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SfmError::Checkpoint(format!("{}: {e}", path.display())))?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| SfmError::Checkpoint(e.to_string()))?;
    if file.schema_version != CHECKPOINT_SCHEMA {
        return Err(SfmError::Checkpoint(format!(
            "unsupported schema version {} (expected {CHECKPOINT_SCHEMA})",
            file.schema_version
        )));
    }
    let mut cameras = BTreeMap::new();
    for (k, p) in file.cameras {
        let c = AffineCamera::from_params(&p);
        cameras.insert(k, AffineCamera::new(c.m, c.t)?);
    }
    Ok(Reconstruction {
        group_id: file.group_id,
        cameras,
        points: file
            .points
            .into_iter()
            .map(|(k, [x, y, z])| (k, Point3::new(x, y, z)))
            .collect(),
        observations: file
            .observations
            .into_iter()
            .map(|(k, obs)| (k, obs.into_iter().map(|(t, x, y)| (t, Point2::new(x, y))).collect()))
            .collect(),
        rejected: file.rejected.into_iter().collect::<BTreeSet<_>>(),
        tile_images: file.tile_images,
        tile_grid: file.tile_grid,
        registration_order: file.registration_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::synthetic_reconstruction;

    #[test]
    fn round_trip_is_exact() {
        let (mut recon, _) = synthetic_reconstruction(2, 3, 20, 0.7);
        recon.rejected.insert((4, "t1".into()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recon.json");
        save_checkpoint(&recon, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), recon);
    }

    #[test]
    fn wrong_schema_rejected() {
        let (recon, _) = synthetic_reconstruction(2, 2, 5, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recon.json");
        save_checkpoint(&recon, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 99");
        std::fs::write(&path, text).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.kind(), "CheckpointError");
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EuclideanError;
use crate::geometry::{Point2, Point3};

/// Ground control point: a known metric position and its pixel location in
/// one or more source images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gcp {
    pub gcp_id: String,
    /// Local Cartesian metres.
    pub euclidean: Point3,
    /// `(image_id, full-image pixel)`.
    pub image_observations: Vec<(String, Point2)>,
}

const HEADER: &str = "gcp_id,X,Y,Z,image_id,px,py";

/// Writes one row per image observation.
pub fn save_gcps(path: &Path, gcps: &[Gcp]) -> Result<(), EuclideanError> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for g in gcps {
        let p = g.euclidean;
        for (image, q) in &g.image_observations {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", g.gcp_id, p.x, p.y, p.z, image, q.x, q.y));
        }
    }
    fs::write(path, out).map_err(|source| EuclideanError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a GCP CSV. Rows sharing a `gcp_id` are merged in order of first
/// appearance and must agree on the metric position.
pub fn load_gcps(path: &Path) -> Result<Vec<Gcp>, EuclideanError> {
    let text = fs::read_to_string(path).map_err(|source| EuclideanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| EuclideanError::ParseError {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != HEADER.split(',').collect::<Vec<_>>() {
        return Err(EuclideanError::ParseError {
            line: 1,
            message: format!("expected header {HEADER:?}"),
        });
    }
    let mut gcps: Vec<Gcp> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let bad = |message: String| EuclideanError::ParseError { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64, EuclideanError> {
            rec[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("field {} is not a finite number: {:?}", i + 1, &rec[i])))
        };
        let point = Point3::new(num(1)?, num(2)?, num(3)?);
        let pixel = Point2::new(num(5)?, num(6)?);
        let id = rec[0].to_string();
        let obs = (rec[4].to_string(), pixel);
        match gcps.iter_mut().find(|g| g.gcp_id == id) {
            Some(g) if g.euclidean != point => {
                return Err(bad(format!("GCP {id} repeated with a different position")));
            }
            Some(g) => g.image_observations.push(obs),
            None => gcps.push(Gcp {
                gcp_id: id,
                euclidean: point,
                image_observations: vec![obs],
            }),
        }
    }
    Ok(gcps)
}

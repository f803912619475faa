use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::DenseError;
use crate::geometry::Point3;

fn io_err(path: &Path, source: std::io::Error) -> DenseError {
    DenseError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes a binary little-endian PLY with `x, y, z` (float64) and
/// `track_id` (uint32) per vertex.
pub fn write_ply(path: &Path, points: &[(Point3, u32)]) -> Result<(), DenseError> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty uint track_id\nend_header\n",
        points.len()
    );
    let mut body = Vec::with_capacity(header.len() + points.len() * 28);
    body.extend_from_slice(header.as_bytes());
    for (p, id) in points {
        body.extend_from_slice(&p.x.to_le_bytes());
        body.extend_from_slice(&p.y.to_le_bytes());
        body.extend_from_slice(&p.z.to_le_bytes());
        body.extend_from_slice(&id.to_le_bytes());
    }
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Reads a file in the layout produced by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<Vec<(Point3, u32)>, DenseError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |reason: String| DenseError::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line).map_err(|e| io_err(path, e))? == 0 {
            return Err(bad("missing end_header".into()));
        }
        let line = line.trim_end().to_string();
        if line == "end_header" {
            break;
        }
        lines.push(line);
    }
    let expected = [
        "format binary_little_endian 1.0",
        "property double x",
        "property double y",
        "property double z",
        "property uint track_id",
    ];
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(bad("not a PLY file".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    for l in &lines[1..] {
        if let Some(n) = l.strip_prefix("element vertex ") {
            count = Some(n.trim().parse::<usize>().map_err(|e| bad(format!("vertex count: {e}")))?);
        } else if !l.starts_with("comment") {
            props.push(l.as_str());
        }
    }
    if props != expected {
        return Err(bad(format!("unsupported layout {props:?}")));
    }
    let count = count.ok_or_else(|| bad("missing vertex element".into()))?;
    let mut buf = vec![0u8; count * 28];
    r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    Ok(buf
        .chunks_exact(28)
        .map(|c| {
            (
                Point3::new(f(&c[0..8]), f(&c[8..16]), f(&c[16..24])),
                u32::from_le_bytes(c[24..28].try_into().unwrap()),
            )
        })
        .collect())
}

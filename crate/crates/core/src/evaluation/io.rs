use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DemGrid, ErrorMap, EvalError};
use crate::imaging::write_pgm16;

pub const ASC_NODATA: f64 = -9999.0;

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// ESRI ASCII grid with a lower-left corner origin; rows are written from
/// north to south. Values use the shortest round-tripping representation.
pub fn write_asc(path: &Path, dem: &DemGrid) -> Result<(), EvalError> {
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", dem.width);
    let _ = writeln!(out, "nrows {}", dem.height);
    let _ = writeln!(out, "xllcorner {:?}", dem.origin.0);
    let _ = writeln!(out, "yllcorner {:?}", dem.origin.1);
    let _ = writeln!(out, "cellsize {:?}", dem.cell);
    let _ = writeln!(out, "NODATA_value {ASC_NODATA}");
    for row in (0..dem.height).rev() {
        let line: Vec<String> = (0..dem.width)
            .map(|col| match dem.get(col, row) {
                Some(h) => format!("{h:?}"),
                None => format!("{ASC_NODATA}"),
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_asc(path: &Path) -> Result<DemGrid, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |reason: String| EvalError::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut tokens = text.split_whitespace().peekable();
    let (mut ncols, mut nrows) = (None, None);
    let (mut x0, mut y0, mut cell) = (None, None, None);
    let mut nodata = ASC_NODATA;
    while let Some(tok) = tokens.peek() {
        if tok.parse::<f64>().is_ok() {
            break;
        }
        let key = tokens.next().unwrap_or_default().to_ascii_lowercase();
        let value = tokens.next().ok_or_else(|| bad(format!("missing value for {key}")))?;
        let num: f64 = value.parse().map_err(|_| bad(format!("bad value {value:?} for {key}")))?;
        match key.as_str() {
            "ncols" => ncols = Some(num as usize),
            "nrows" => nrows = Some(num as usize),
            "xllcorner" => x0 = Some(num),
            "yllcorner" => y0 = Some(num),
            "cellsize" => cell = Some(num),
            "nodata_value" => nodata = num,
            _ => return Err(bad(format!("unknown header key {key:?}"))),
        }
    }
    let (Some(w), Some(h), Some(x0), Some(y0), Some(cell)) = (ncols, nrows, x0, y0, cell) else {
        return Err(bad("incomplete header".into()));
    };
    let mut dem = DemGrid::empty((x0, y0), cell, w, h)?;
    let values: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad cell value {t:?}"))))
        .collect::<Result<_, _>>()?;
    if values.len() != w * h {
        return Err(bad(format!("expected {} cells, found {}", w * h, values.len())));
    }
    for (k, v) in values.into_iter().enumerate() {
        let (row, col) = (h - 1 - k / w, k % w);
        dem.set(col, row, (v != nodata && v.is_finite()).then_some(v));
    }
    Ok(dem)
}

/// 16-bit PGM of an error map. Sample 0 is no-data; sample `s >= 1` encodes
/// `lo + (s - 1) * (hi - lo) / 65534`, with `lo`/`hi` the error range and
/// both stated in the header comment. Row 0 of the image is the north edge.
pub fn write_error_pgm16(path: &Path, map: &ErrorMap) -> Result<(), EvalError> {
    let valid = map.errors.iter().flatten();
    let lo = valid.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = valid.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut samples = Vec::with_capacity(map.width * map.height);
    for row in (0..map.height).rev() {
        for col in 0..map.width {
            samples.push(match map.errors[row * map.width + col] {
                Some(e) => 1 + ((e - lo) / span * 65534.0).round().clamp(0.0, 65534.0) as u16,
                None => 0,
            });
        }
    }
    let comment = format!(
        "height error map, metres\nerror = {lo:?} + (sample - 1) * {span:?} / 65534\nsample 0 = no-data"
    );
    write_pgm16(path, map.width, map.height, &samples, Some(&comment)).map_err(|e| EvalError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::error_map;
    use crate::imaging::read_pgm;

    fn sample() -> DemGrid {
        DemGrid {
            origin: (10.5, -3.25),
            cell: 0.5,
            width: 3,
            height: 2,
            heights: vec![Some(1.0 / 3.0), None, Some(-2.5), Some(0.1 + 0.2), Some(1e-7), Some(400.0)],
        }
    }

    #[test]
    fn asc_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.asc");
        write_asc(&p, &sample()).unwrap();
        assert_eq!(read_asc(&p).unwrap(), sample());
        let text = fs::read_to_string(&p).unwrap();
        // North row first.
        assert!(text.lines().nth(6).unwrap().starts_with("0.30000000000000004"));
    }

    #[test]
    fn asc_rejects_short_body() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.asc");
        fs::write(&p, "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n").unwrap();
        assert_eq!(read_asc(&p).unwrap_err().kind(), "FormatError");
    }

    #[test]
    fn pgm_scaling_documented() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.pgm");
        let g = sample();
        let mut t = g.clone();
        t.heights[0] = Some(2.0 / 3.0);
        let map = error_map(&t, &g).unwrap();
        write_error_pgm16(&p, &map).unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        let raw = fs::read(&p).unwrap();
        let body = &raw[raw.len() - 12..];
        let s: Vec<u16> = body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        // Bottom image row is grid row 0: errors [1/3, none, 0].
        assert_eq!(&s[3..], &[65535, 0, 1]);
        assert!(String::from_utf8_lossy(&raw[..200.min(raw.len())]).contains("sample 0 = no-data"));
    }
}

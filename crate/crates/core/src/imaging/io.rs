use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{GrayImage, ImagingError, SourceImage};

/// Contents of the `<stem>.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub capture_time: DateTime<Utc>,
}

fn format_err(path: &Path, reason: impl Into<String>) -> ImagingError {
    ImagingError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads a binary PGM (P5), 8- or 16-bit. Samples are rescaled to 0..255.
pub fn read_pgm(path: &Path) -> Result<GrayImage, ImagingError> {
    let bytes = fs::read(path).map_err(|e| ImagingError::io(path, e))?;
    parse_pgm(&bytes).map_err(|reason| format_err(path, reason))
}

fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String, String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if next_token(&mut pos)? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let parse = |s: String| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let width = parse(next_token(&mut pos)?)?;
    let height = parse(next_token(&mut pos)?)?;
    let maxval = parse(next_token(&mut pos)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if bytes.len() < pos + need {
        return Err("truncated raster".into());
    }
    let raster = &bytes[pos..pos + need];
    let scale = 255.0 / maxval as f32;
    let data = if wide {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 * scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f32 * scale).collect()
    };
    Ok(GrayImage::new(width, height, data))
}

/// Writes an 8-bit P5 PGM, rounding and clamping samples to 0..255.
pub fn write_pgm8(path: &Path, img: &GrayImage) -> Result<(), ImagingError> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    fs::write(path, out).map_err(|e| ImagingError::io(path, e))
}

/// Writes a 16-bit P5 PGM. Each line of `comment` becomes a `#` header line.
pub fn write_pgm16(
    path: &Path,
    width: usize,
    height: usize,
    samples: &[u16],
    comment: Option<&str>,
) -> Result<(), ImagingError> {
    assert_eq!(samples.len(), width * height);
    let mut out = Vec::with_capacity(64 + 2 * samples.len());
    out.extend_from_slice(b"P5\n");
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = write!(out, "{width} {height}\n65535\n");
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| ImagingError::io(path, e))
}

fn read_png(path: &Path) -> Result<GrayImage, ImagingError> {
    let img = image::open(path).map_err(|e| format_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = if img.color().has_color() {
        img.to_rgb32f()
            .pixels()
            .map(|p| (p.0[0] + p.0[1] + p.0[2]) / 3.0 * 255.0)
            .collect()
    } else {
        img.to_luma32f().pixels().map(|p| p.0[0] * 255.0).collect()
    };
    Ok(GrayImage::new(w, h, data))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Writes the capture-time sidecar next to `image_path`.
pub fn write_meta(image_path: &Path, meta: &ImageMeta) -> Result<(), ImagingError> {
    let p = sidecar_path(image_path);
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&p, text + "\n").map_err(|e| ImagingError::io(&p, e))
}

/// Loads a PGM or PNG image plus its optional sidecar. The id is the file
/// stem. A missing sidecar leaves `capture_time` empty.
pub fn load_image(path: &Path) -> Result<SourceImage, ImagingError> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let pixels = match ext.as_str() {
        "pgm" => read_pgm(path)?,
        "png" => read_png(path)?,
        other => return Err(format_err(path, format!("unsupported extension {other:?}"))),
    };
    let meta_path = sidecar_path(path);
    let capture_time = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| ImagingError::io(&meta_path, e))?;
        let meta: ImageMeta =
            serde_json::from_str(&text).map_err(|e| format_err(&meta_path, e.to_string()))?;
        Some(meta.capture_time)
    } else {
        None
    };
    Ok(SourceImage {
        id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        pixels,
        capture_time,
    })
}

/// All `.pgm`/`.png` images in `dir`, sorted by id.
pub fn load_image_dir(dir: &Path) -> Result<Vec<SourceImage>, ImagingError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ImagingError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).as_deref(),
                Some("pgm") | Some("png")
            )
        })
        .collect();
    paths.sort();
    let mut images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
    images.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(images)
}

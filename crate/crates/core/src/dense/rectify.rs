use super::matcher::{DisparityMap, StereoMatcher};
use super::DenseError;
use crate::geometry::{
    estimate_affine_fundamental, estimate_affine_fundamental_ransac, rectify_pair,
    AffineFundamental, AffineTransform2, Correspondence2D2D, GeometryError, Point2, RansacConfig,
    RectifyingPair,
};
use crate::imaging::GrayImage;

/// Default padding (pixels) added on both sides of the disparity range seen
/// in the sparse matches.
pub const DEFAULT_MARGIN: i32 = 16;

/// A tile pair resampled onto rectified canvases. The transforms map
/// original tile pixels to canvas pixels; rows correspond between canvases.
#[derive(Debug, Clone)]
pub struct RectifiedPair {
    pub fundamental: AffineFundamental,
    pub transforms: RectifyingPair,
    pub left: GrayImage,
    pub right: GrayImage,
    pub range: (i32, i32),
    /// `(width, height)` of the source tiles.
    pub size_i: (usize, usize),
    pub size_j: (usize, usize),
}

fn corners(w: usize, h: usize) -> [Point2; 4] {
    let (x1, y1) = ((w - 1) as f64, (h - 1) as f64);
    [
        Point2::new(0.0, 0.0),
        Point2::new(x1, 0.0),
        Point2::new(0.0, y1),
        Point2::new(x1, y1),
    ]
}

fn bounds(t: &AffineTransform2, w: usize, h: usize) -> (f64, f64, f64, f64) {
    corners(w, h).iter().map(|p| t.apply(p)).fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(x0, x1, y0, y1), p| (x0.min(p.x), x1.max(p.x), y0.min(p.y), y1.max(p.y)),
    )
}

/// Resamples `tile` onto a `width x height` canvas through `t` (tile ->
/// canvas). Canvas pixels that fall outside the tile are NaN.
pub fn warp_to_canvas(tile: &GrayImage, t: &AffineTransform2, width: usize, height: usize) -> GrayImage {
    let inv = t.inverse().expect("rectifying transforms are invertible");
    GrayImage::from_fn(width, height, |c, r| {
        let p = inv.apply(&Point2::new(c as f64, r as f64));
        tile.sample(p.x, p.y).unwrap_or(f32::NAN)
    })
}

/// Rectifies a tile pair from its sparse matches and runs `matcher` on it.
///
/// The affine fundamental matrix is fit robustly when `ransac` is given and
/// more than four matches exist. Both canvases share their row origin, which
/// is the top of the row band covered by both tiles. The search range spans
/// the sparse matches' rectified disparities widened by `margin`.
pub fn rectify_and_match(
    tile_i: &GrayImage,
    tile_j: &GrayImage,
    sparse: &[Correspondence2D2D],
    matcher: &dyn StereoMatcher,
    margin: i32,
    ransac: Option<&RansacConfig>,
) -> Result<(DisparityMap, RectifiedPair), DenseError> {
    let (fundamental, inliers): (AffineFundamental, Vec<Correspondence2D2D>) = match ransac {
        Some(cfg) if sparse.len() > 4 => {
            let out = estimate_affine_fundamental_ransac(sparse, cfg)?;
            let kept = sparse
                .iter()
                .zip(&out.inliers)
                .filter(|(_, &k)| k)
                .map(|(c, _)| *c)
                .collect();
            (out.model, kept)
        }
        _ => (estimate_affine_fundamental(sparse)?, sparse.to_vec()),
    };
    let raw = rectify_pair(&fundamental)?;
    let size_i = (tile_i.width(), tile_i.height());
    let size_j = (tile_j.width(), tile_j.height());
    let (xi0, xi1, yi0, yi1) = bounds(&raw.h_i, size_i.0, size_i.1);
    let (xj0, xj1, yj0, yj1) = bounds(&raw.h_j, size_j.0, size_j.1);
    let (ylo, yhi) = (yi0.max(yj0), yi1.min(yj1));
    if ylo > yhi {
        return Err(GeometryError::DegenerateGeometry("rectified tiles share no rows".into()).into());
    }
    let oy = -ylo.floor();
    let transforms = RectifyingPair {
        h_i: raw.h_i.translated(-xi0.floor(), oy),
        h_j: raw.h_j.translated(-xj0.floor(), oy),
    };
    let height = (yhi.floor() - ylo.floor()) as usize + 1;
    let width_i = (xi1.ceil() - xi0.floor()) as usize + 1;
    let width_j = (xj1.ceil() - xj0.floor()) as usize + 1;
    let left = warp_to_canvas(tile_i, &transforms.h_i, width_i, height);
    let right = warp_to_canvas(tile_j, &transforms.h_j, width_j, height);

    let (dmin, dmax) = inliers.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let d = transforms.h_j.apply(&c.b).x - transforms.h_i.apply(&c.a).x;
        (lo.min(d), hi.max(d))
    });
    let range = (dmin.floor() as i32 - margin, dmax.ceil() as i32 + margin);
    let dmap = matcher.compute(&left, &right, range);
    if dmap.valid_count() == 0 {
        return Err(DenseError::MatcherFailure(format!(
            "{} returned an empty valid mask for range {range:?}",
            matcher.name()
        )));
    }
    Ok((
        dmap,
        RectifiedPair {
            fundamental,
            transforms,
            left,
            right,
            range,
            size_i,
            size_j,
        },
    ))
}

/// Maps valid disparities on a `stride` grid back to original tile
/// coordinates. Correspondences whose right point leaves tile `j` are
/// dropped.
pub fn lift_disparities(dmap: &DisparityMap, pair: &RectifiedPair, stride: usize) -> Vec<Correspondence2D2D> {
    let stride = stride.max(1);
    let inv_i = pair.transforms.h_i.inverse().expect("rectifying transforms are invertible");
    let inv_j = pair.transforms.h_j.inverse().expect("rectifying transforms are invertible");
    let inside = |p: &Point2, (w, h): (usize, usize)| {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64
    };
    let mut out = Vec::new();
    for r in (0..dmap.height).step_by(stride) {
        for c in (0..dmap.width).step_by(stride) {
            let Some(d) = dmap.get(c, r) else { continue };
            let a = inv_i.apply(&Point2::new(c as f64, r as f64));
            let b = inv_j.apply(&Point2::new(c as f64 + d, r as f64));
            if inside(&a, pair.size_i) && inside(&b, pair.size_j) {
                out.push(Correspondence2D2D::new(a, b));
            }
        }
    }
    out
}

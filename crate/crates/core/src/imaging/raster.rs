/// Row-major single-channel image with `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "buffer does not match dimensions");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    /// Bilinear sample at sub-pixel `(x, y)` with pixel centers on integers.
    /// Returns `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        if !(x >= 0.0 && y >= 0.0) || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Copy of the `w x h` window whose top-left corner is `(col, row)`.
    pub fn crop(&self, col: usize, row: usize, w: usize, h: usize) -> GrayImage {
        assert!(col + w <= self.width && row + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w * h);
        for r in row..row + h {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        GrayImage::new(w, h, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_on_ramp_is_exact() {
        let img = GrayImage::from_fn(5, 4, |c, r| (2 * c + 3 * r) as f32);
        let v = img.sample(1.25, 2.5).unwrap();
        assert!((v - (2.5 + 7.5)).abs() < 1e-5);
        assert_eq!(img.sample(4.0, 3.0), Some(17.0));
        assert_eq!(img.sample(4.01, 0.0), None);
        assert_eq!(img.sample(-0.01, 0.0), None);
    }

    #[test]
    fn crop_copies_window() {
        let img = GrayImage::from_fn(6, 6, |c, r| (10 * r + c) as f32);
        let c = img.crop(2, 3, 3, 2);
        assert_eq!(c.data(), &[32.0, 33.0, 34.0, 42.0, 43.0, 44.0]);
    }
}

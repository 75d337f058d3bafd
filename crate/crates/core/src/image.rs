//! 8-bit grayscale images and the resampling used by pyramids.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Integer-rounded Rec. 601 luma.
pub fn luma_rec601(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage { width, height, data: vec![0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "{}x{} image needs {} bytes, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    /// Converts interleaved RGB bytes with [`luma_rec601`].
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::shape("rgb buffer length"));
        }
        let data = rgb.chunks(3).map(|p| luma_rec601(p[0], p[1], p[2])).collect();
        Ok(GrayImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Copies a `w x h` window; the window must lie inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop outside image");
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage { width: w, height: h, data }
    }

    /// Single-channel tensor with values scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor<f64> {
        Tensor::from_vec(
            &[1, self.height, self.width],
            self.data.iter().map(|&v| v as f64 / 255.0).collect(),
        )
        .expect("extent matches")
    }

    /// Bilinear resize with pixel centres aligned; used for scan pyramids.
    pub fn resize(&self, width: usize, height: usize) -> GrayImage {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let bx = fx - x0 as f64;
            let by = fy - y0 as f64;
            let v = (1.0 - by) * ((1.0 - bx) * self.get(x0, y0) as f64 + bx * self.get(x1, y0) as f64)
                + by * ((1.0 - bx) * self.get(x0, y1) as f64 + bx * self.get(x1, y1) as f64);
            v.round().clamp(0.0, 255.0) as u8
        })
    }

    /// Halves each extent (rounding up) with a 2x2 box average; the last
    /// row/column is replicated when an extent is odd.
    pub fn downsample2(&self) -> GrayImage {
        let (w, h) = (self.width.div_ceil(2), self.height.div_ceil(2));
        GrayImage::from_fn(w, h, |x, y| {
            let x0 = 2 * x;
            let y0 = 2 * y;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let s = self.get(x0, y0) as u32 + self.get(x1, y0) as u32 + self.get(x0, y1) as u32 + self.get(x1, y1) as u32;
            ((s + 2) / 4) as u8
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_weights() {
        assert_eq!(luma_rec601(255, 255, 255), 255);
        assert_eq!(luma_rec601(0, 0, 0), 0);
        assert_eq!(luma_rec601(255, 0, 0), 76);
        assert_eq!(luma_rec601(0, 255, 0), 150);
        assert_eq!(luma_rec601(0, 0, 255), 29);
    }

    #[test]
    fn downsample_extents_round_up() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x + 10 * y) as u8);
        let half = img.downsample2();
        assert_eq!((half.width(), half.height()), (3, 2));
        // (0 + 1 + 10 + 11) / 4 = 5.5 -> 6
        assert_eq!(half.get(0, 0), 6);
        // replicated corner: only pixel (4, 2) = 24
        assert_eq!(half.get(2, 1), 24);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = GrayImage::from_fn(7, 5, |x, y| (x * 3 + y * 17) as u8);
        assert_eq!(img.resize(7, 5), img);
        let flat = GrayImage::from_fn(9, 9, |_, _| 42);
        assert!(flat.resize(4, 6).data().iter().all(|&v| v == 42));
    }
}

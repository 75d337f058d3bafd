use crate::error::{Error, Result};

/// Binary occupancy grid, row-major, with a cached count of set cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    ones: usize,
}

impl RoiMask {
    pub fn empty(width: usize, height: usize) -> Self {
        RoiMask { width, height, bits: vec![false; width * height], ones: 0 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        RoiMask { width, height, bits: vec![true; width * height], ones: width * height }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(format!("{width}x{height} mask needs {} bits, got {}", width * height, bits.len())));
        }
        let ones = bits.iter().filter(|&&b| b).count();
        Ok(RoiMask { width, height, bits, ones })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.ones
    }

    /// Fraction of set cells, in `[0, 1]`.
    pub fn sparsity(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.ones as f64 / self.bits.len() as f64
        }
    }

    pub fn set(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        if !self.bits[i] {
            self.bits[i] = true;
            self.ones += 1;
        }
    }

    /// Sets the half-open rectangle `[x0, x1) x [y0, y1)`, clipped to the grid.
    pub fn fill_rect(&mut self, x0: isize, y0: isize, x1: isize, y1: isize) {
        let cx0 = x0.clamp(0, self.width as isize) as usize;
        let cx1 = x1.clamp(0, self.width as isize) as usize;
        let cy0 = y0.clamp(0, self.height as isize) as usize;
        let cy1 = y1.clamp(0, self.height as isize) as usize;
        for y in cy0..cy1 {
            for x in cx0..cx1 {
                self.set(x, y);
            }
        }
    }

    /// Flat indices of set cells in row-major order.
    pub fn positions(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Half-resolution mask; a cell is set when any cell of its 2x2 block is.
    /// Extents round up.
    pub fn downsample(&self) -> RoiMask {
        let (w, h) = (self.width.div_ceil(2), self.height.div_ceil(2));
        let mut out = RoiMask::empty(w, h);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set(x / 2, y / 2);
                }
            }
        }
        out
    }

    pub fn union(&self, other: &RoiMask) -> Result<RoiMask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape("mask union extents differ"));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        RoiMask::from_bits(self.width, self.height, bits)
    }
}

use super::group::{build_mask, ScaleGroup};
use super::mask::RoiMask;
use crate::image::GrayImage;

/// Extra pixels of a `levels`-deep pyramid relative to its base, counting
/// the true rounded-up extents of each level.
pub fn pyramid_overhead(base_size: (usize, usize), levels: usize) -> f64 {
    assert!(levels >= 1, "pyramid needs at least one level");
    let base = (base_size.0 * base_size.1) as f64;
    let (mut w, mut h) = base_size;
    let mut extra = 0usize;
    for _ in 1..levels {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
        extra += w * h;
    }
    extra as f64 / base
}

/// `sum_{k=1}^{levels-1} 4^-k`, which tends to 1/3.
pub fn geometric_overhead(levels: usize) -> f64 {
    assert!(levels >= 1, "pyramid needs at least one level");
    (1..levels).map(|k| 0.25f64.powi(k as i32)).sum()
}

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub octave: u32,
    pub image: GrayImage,
    pub mask: RoiMask,
}

/// Sparse pyramid: one level per non-empty scale group.
#[derive(Debug, Clone, Default)]
pub struct RoiPyramid {
    pub levels: Vec<PyramidLevel>,
}

impl RoiPyramid {
    pub fn total_pixels(&self) -> usize {
        self.levels.iter().map(|l| l.image.width() * l.image.height()).sum()
    }
}

/// Level `k` is the image box-halved `k` times, so its extents are
/// `ceil(original / 2^k)`.
pub fn build_roi_pyramid(image: &GrayImage, groups: &[ScaleGroup], receptive_field_cap: f64) -> RoiPyramid {
    let mut levels = Vec::new();
    let mut current = image.clone();
    let mut octave = 0;
    let mut sorted: Vec<&ScaleGroup> = groups.iter().collect();
    sorted.sort_by_key(|g| g.octave);
    for g in sorted {
        while octave < g.octave {
            current = current.downsample2();
            octave += 1;
        }
        let mask = build_mask(g, (current.width(), current.height()), receptive_field_cap);
        levels.push(PyramidLevel { octave, image: current.clone(), mask });
    }
    RoiPyramid { levels }
}

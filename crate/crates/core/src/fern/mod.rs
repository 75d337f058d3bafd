//! Boosted random ferns. A fern is eight pixel-difference tests on a square
//! grayscale patch; their outcomes index one of 256 partitions, each holding a
//! RealBoost log-odds score.

pub mod boost;
pub mod cascade;
pub mod serial;

pub use boost::{partition_scores, train_cascade, TrainConfig, TrainReport};
pub use cascade::{cascade_score, scan, CascadeModel, CascadeResult, ScanOptions, ScanOutput};

use crate::image::GrayImage;

pub const SPLITS_PER_FERN: usize = 8;
pub const PARTITIONS: usize = 1 << SPLITS_PER_FERN;
pub const DEFAULT_PATCH_SIZE: usize = 32;

/// `s = 1` when `p(x1, y1) - p(x2, y2) < theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
    pub theta: i16,
}

impl Split {
    #[inline]
    pub fn test(&self, patch: &PatchView<'_>) -> bool {
        let d = patch.get(self.x1 as usize, self.y1 as usize) as i16 - patch.get(self.x2 as usize, self.y2 as usize) as i16;
        d < self.theta
    }

    fn within(&self, size: usize) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|&c| (c as usize) < size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fern {
    pub splits: [Split; SPLITS_PER_FERN],
    pub scores: Box<[f64; PARTITIONS]>,
}

impl Fern {
    pub fn within(&self, patch_size: usize) -> bool {
        self.splits.iter().all(|s| s.within(patch_size))
    }
}

/// A square window into a grayscale buffer, no copy.
#[derive(Debug, Clone, Copy)]
pub struct PatchView<'a> {
    data: &'a [u8],
    stride: usize,
    offset: usize,
    size: usize,
}

impl<'a> PatchView<'a> {
    pub fn new(image: &'a GrayImage, x0: usize, y0: usize, size: usize) -> Self {
        assert!(x0 + size <= image.width() && y0 + size <= image.height(), "patch outside image");
        PatchView { data: image.data(), stride: image.width(), offset: y0 * image.width() + x0, size }
    }

    /// The whole image, which must be square.
    pub fn whole(image: &'a GrayImage) -> Self {
        assert_eq!(image.width(), image.height(), "patch must be square");
        PatchView::new(image, 0, 0, image.width())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[self.offset + y * self.stride + x]
    }
}

/// `sum_i s_i * 2^i` over the eight split outcomes.
#[inline]
pub fn fern_index(patch: &PatchView<'_>, fern: &Fern) -> usize {
    fern.splits
        .iter()
        .enumerate()
        .fold(0, |acc, (i, s)| acc | ((s.test(patch) as usize) << i))
}

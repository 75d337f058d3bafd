//! Timing harnesses: a single masked convolution layer against its dense
//! counterpart, the proposal network under forced masks, and the whole
//! pipeline per image.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stnface_core::image::GrayImage;
use stnface_core::nn::{conv2d_forward, ConvSpec};
use stnface_core::roi::{roi_conv_forward, RoiMask};
use stnface_core::{Result, Tensor};

use crate::detect::{dense_levels, detect_with_stats, DetectOptions};
use crate::eval::Summary;
use crate::model::DetectorModel;
use crate::rpn::{image_input, Rpn};

/// Union of random face-sized boxes, grown until at least `target` of the
/// grid is covered.
pub fn box_mask<R: Rng>(width: usize, height: usize, target: f64, rng: &mut R) -> RoiMask {
    let mut mask = RoiMask::empty(width, height);
    let goal = (target.clamp(0.0, 1.0) * (width * height) as f64).ceil() as usize;
    if goal >= width * height {
        return RoiMask::full(width, height);
    }
    let max_side = (width.min(height) / 3).max(2);
    while mask.count() < goal {
        let side = rng.gen_range(max_side / 3..=max_side) as isize;
        let x = rng.gen_range(-side / 2..width as isize - side / 2);
        let y = rng.gen_range(-side / 2..height as isize - side / 2);
        mask.fill_rect(x, y, x + side, y + side);
    }
    mask
}

fn best_of<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityRow {
    pub target: f64,
    pub sparsity: f64,
    pub macs_dense: u64,
    pub macs_roi: u64,
    pub dense_s: f64,
    pub roi_s: f64,
}

impl SparsityRow {
    pub fn time_ratio(&self) -> f64 {
        self.roi_s / self.dense_s
    }

    pub const CSV_HEADER: &'static str = "target,sparsity,macs_dense,macs_roi,dense_ms,roi_ms,time_ratio";

    pub fn csv(&self) -> String {
        format!(
            "{:.3},{:.4},{},{},{:.3},{:.3},{:.4}",
            self.target,
            self.sparsity,
            self.macs_dense,
            self.macs_roi,
            self.dense_s * 1e3,
            self.roi_s * 1e3,
            self.time_ratio()
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvBench {
    pub width: usize,
    pub height: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for ConvBench {
    fn default() -> Self {
        ConvBench { width: 640, height: 480, in_channels: 8, out_channels: 16, kernel: 3, reps: 3, seed: 0 }
    }
}

/// Single stride-1 "same" convolution in `f32`, dense against masked at each
/// requested sparsity.
pub fn bench_roiconv(b: &ConvBench, sparsities: &[f64]) -> Result<Vec<SparsityRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
    let spec = ConvSpec::new(b.in_channels, b.out_channels, b.kernel, 1, b.kernel / 2)?;
    let input: Tensor<f32> = Tensor::from_fn(&[b.in_channels, b.height, b.width], |_| rng.gen_range(-1.0..1.0));
    let filters: Tensor<f32> = Tensor::from_fn(&spec.filter_shape(), |_| rng.gen_range(-1.0..1.0));
    let dense_s = best_of(b.reps, || conv2d_forward(&input, &filters, &spec).map(drop))?;
    let macs_dense = spec.macs(b.width * b.height);
    let mut rows = Vec::new();
    for &target in sparsities {
        let mask = box_mask(b.width, b.height, target, &mut rng);
        let mut macs_roi = 0;
        let roi_s = best_of(b.reps, || {
            macs_roi = roi_conv_forward(&input, &filters, &mask, &spec)?.macs;
            Ok(())
        })?;
        rows.push(SparsityRow { target, sparsity: mask.sparsity(), macs_dense, macs_roi, dense_s, roi_s });
    }
    Ok(rows)
}

/// Proposal network on one `width x height` level, dense against masked.
pub fn bench_rpn_sparsity(rpn: &Rpn, width: usize, height: usize, sparsities: &[f64], reps: usize, seed: u64) -> Result<Vec<SparsityRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = GrayImage::from_fn(width, height, |_, _| rng.gen());
    let input = image_input(&img);
    let dense_s = best_of(reps, || rpn.forward(&input).map(drop))?;
    let full = rpn.forward_roi(&input, &RoiMask::full(width, height))?.2;
    let mut rows = Vec::new();
    for &target in sparsities {
        let mask = box_mask(width, height, target, &mut rng);
        let mut macs_roi = 0;
        let roi_s = best_of(reps, || {
            macs_roi = rpn.forward_roi(&input, &mask)?.2;
            Ok(())
        })?;
        rows.push(SparsityRow { target, sparsity: mask.sparsity(), macs_dense: full, macs_roi, dense_s, roi_s });
    }
    Ok(rows)
}

/// One row per image in the layout: sparsity, pre-filter, proposal network
/// dense and masked, verification, total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineRow {
    pub sparsity: f64,
    pub prefilter_s: f64,
    pub rpn_dense_s: f64,
    pub rpn_roi_s: f64,
    pub rcnn_s: f64,
    pub total_s: f64,
}

impl PipelineRow {
    pub const CSV_HEADER: &'static str = "sparsity,prefilter_ms,rpn_dense_ms,rpn_roi_ms,rpn_roi_fraction,rcnn_ms,total_ms";

    pub fn csv(&self) -> String {
        format!(
            "{:.4},{:.3},{:.3},{:.3},{:.4},{:.3},{:.3}",
            self.sparsity,
            self.prefilter_s * 1e3,
            self.rpn_dense_s * 1e3,
            self.rpn_roi_s * 1e3,
            self.rpn_roi_s / self.rpn_dense_s,
            self.rcnn_s * 1e3,
            self.total_s * 1e3
        )
    }
}

pub fn bench_pipeline(model: &DetectorModel, images: &[GrayImage], opts: &DetectOptions) -> Result<Vec<PipelineRow>> {
    let mut rows = Vec::new();
    let roi = DetectOptions { use_roi_conv: true, ..*opts };
    for img in images {
        let (_, st) = detect_with_stats(img, model, &roi)?;
        let levels = dense_levels(img);
        let t = Instant::now();
        for l in &levels {
            model.rpn.forward(&l.input)?;
        }
        let rpn_dense_s = t.elapsed().as_secs_f64();
        rows.push(PipelineRow {
            sparsity: st.sparsity,
            prefilter_s: st.prefilter_s,
            rpn_dense_s,
            rpn_roi_s: st.rpn_s,
            rcnn_s: st.rcnn_s,
            total_s: st.total_s,
        });
    }
    Ok(rows)
}

/// Column means of a set of pipeline rows.
pub fn mean_row(rows: &[PipelineRow]) -> PipelineRow {
    let m = |f: fn(&PipelineRow) -> f64| Summary::of(&rows.iter().map(f).collect::<Vec<_>>()).mean;
    PipelineRow {
        sparsity: m(|r| r.sparsity),
        prefilter_s: m(|r| r.prefilter_s),
        rpn_dense_s: m(|r| r.rpn_dense_s),
        rpn_roi_s: m(|r| r.rpn_roi_s),
        rcnn_s: m(|r| r.rcnn_s),
        total_s: m(|r| r.total_s),
    }
}

//! Soft-cascade evaluation and sliding-window scanning.

use super::{fern_index, Fern, PatchView};
use crate::detection::{BBox, Detection};
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    ferns: Vec<Fern>,
    stage_thresholds: Vec<f64>,
    patch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeResult {
    /// Cumulative score of the ferns evaluated.
    pub score: f64,
    /// Stage that rejected the patch, `None` if accepted.
    pub rejected_at: Option<usize>,
}

impl CascadeResult {
    pub fn accepted(&self) -> bool {
        self.rejected_at.is_none()
    }

    /// Number of ferns evaluated.
    pub fn cost(&self, total: usize) -> usize {
        self.rejected_at.map_or(total, |s| s + 1)
    }
}

impl CascadeModel {
    pub fn new(ferns: Vec<Fern>, stage_thresholds: Vec<f64>, patch_size: usize) -> Result<Self> {
        if ferns.len() != stage_thresholds.len() {
            return Err(Error::Invalid(format!(
                "{} ferns but {} stage thresholds",
                ferns.len(),
                stage_thresholds.len()
            )));
        }
        if let Some(i) = ferns.iter().position(|f| !f.within(patch_size)) {
            return Err(Error::Invalid(format!("fern {i} has a split outside the {patch_size}px patch")));
        }
        if ferns.iter().any(|f| f.scores.iter().any(|s| !s.is_finite())) || stage_thresholds.iter().any(|t| t.is_nan()) {
            return Err(Error::NonFinite("cascade scores".into()));
        }
        Ok(CascadeModel { ferns, stage_thresholds, patch_size })
    }

    pub fn ferns(&self) -> &[Fern] {
        &self.ferns
    }

    pub fn stage_thresholds(&self) -> &[f64] {
        &self.stage_thresholds
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn len(&self) -> usize {
        self.ferns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ferns.is_empty()
    }

    /// Keeps the first `n` stages.
    pub fn truncated(&self, n: usize) -> CascadeModel {
        let n = n.min(self.len());
        CascadeModel {
            ferns: self.ferns[..n].to_vec(),
            stage_thresholds: self.stage_thresholds[..n].to_vec(),
            patch_size: self.patch_size,
        }
    }

    /// Cumulative score after every fern, with no early exit.
    pub fn prefix_scores(&self, patch: &PatchView<'_>) -> Vec<f64> {
        let mut acc = 0.0;
        self.ferns
            .iter()
            .map(|f| {
                acc += f.scores[fern_index(patch, f)];
                acc
            })
            .collect()
    }
}

pub fn cascade_score(patch: &PatchView<'_>, model: &CascadeModel) -> CascadeResult {
    debug_assert_eq!(patch.size(), model.patch_size);
    let mut score = 0.0;
    for (stage, (f, &t)) in model.ferns.iter().zip(&model.stage_thresholds).enumerate() {
        score += f.scores[fern_index(patch, f)];
        if score < t {
            return CascadeResult { score, rejected_at: Some(stage) };
        }
    }
    CascadeResult { score, rejected_at: None }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub scale_step: f64,
    pub window_stride: usize,
    /// Smallest window side, in original pixels.
    pub min_window: f64,
    /// Accepted windows scoring below this are dropped.
    pub min_score: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            scale_step: 2f64.powf(1.0 / 3.0),
            window_stride: 4,
            min_window: 36.0,
            min_score: f64::NEG_INFINITY,
        }
    }
}

/// Slides the model's window over a pyramid of bilinearly resized copies.
/// Returns accepted windows in original coordinates, plus the total number of
/// windows and ferns evaluated.
pub fn scan(image: &GrayImage, model: &CascadeModel, opts: &ScanOptions) -> Result<ScanOutput> {
    if !(opts.scale_step > 1.0) || opts.window_stride == 0 || !(opts.min_window > 0.0) {
        return Err(Error::Invalid("scale_step must exceed 1, stride and min_window be positive".into()));
    }
    let p = model.patch_size;
    let mut out = ScanOutput::default();
    let mut scale = opts.min_window / p as f64;
    loop {
        let w = (image.width() as f64 / scale).round() as usize;
        let h = (image.height() as f64 / scale).round() as usize;
        if w < p || h < p {
            break;
        }
        let level = if (w, h) == (image.width(), image.height()) { image.clone() } else { image.resize(w, h) };
        let sx = image.width() as f64 / w as f64;
        let sy = image.height() as f64 / h as f64;
        for y in (0..=h - p).step_by(opts.window_stride) {
            for x in (0..=w - p).step_by(opts.window_stride) {
                let r = cascade_score(&PatchView::new(&level, x, y, p), model);
                out.windows += 1;
                out.ferns_evaluated += r.cost(model.len()) as u64;
                if r.accepted() && r.score >= opts.min_score {
                    let bbox = BBox::new(x as f64 * sx, y as f64 * sy, p as f64 * sx, p as f64 * sy);
                    out.detections.push(Detection::new(bbox, r.score));
                }
            }
        }
        scale *= opts.scale_step;
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ScanOutput {
    pub detections: Vec<Detection>,
    pub windows: u64,
    pub ferns_evaluated: u64,
}

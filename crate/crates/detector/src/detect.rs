//! Inference: pre-filter scan, ROI pyramid, proposal network (masked or
//! dense), suppression, rectification and verification.

use std::time::Instant;

use stnface_core::fern::{scan, ScanOptions};
use stnface_core::image::GrayImage;
use stnface_core::roi::{build_roi_pyramid, group_candidates, RoiMask, MIN_FACE};
use stnface_core::stn::{LandmarkSet, Point};
use stnface_core::suppression::{nms, non_top_k};
use stnface_core::{BBox, Detection, Error, Result, Tensor};

use crate::eval::{evaluate, threshold_at_budget, MATCH_IOU};
use crate::model::DetectorModel;
use crate::rpn::{decode, features_at, head_at, image_input, receptive_field_size, CellPrediction, RpnMaps};
use crate::synth::AnnotatedSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Suppression {
    /// Keep the `k` best proposals of every overlap cluster.
    NonTopK { k: usize },
    /// Plain NMS at the options' IoU threshold.
    Nms,
    /// NMS whose IoU threshold is raised until it keeps at least as many
    /// proposals as Non-top-K with this `k` would, then truncated to that
    /// count.
    NmsMatched { k: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct DetectOptions {
    pub use_roi_conv: bool,
    pub suppression: Suppression,
    pub iou_threshold: f64,
    /// Overrides the model's proposal threshold.
    pub rpn_threshold: Option<f64>,
    /// Overrides the model's verdict threshold.
    pub verdict_threshold: Option<f64>,
    /// IoU for the NMS over verified faces.
    pub final_nms: f64,
    pub scan: ScanOptions,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            use_roi_conv: true,
            suppression: Suppression::NonTopK { k: 3 },
            iou_threshold: 0.5,
            rpn_threshold: None,
            verdict_threshold: None,
            final_nms: 0.3,
            scan: ScanOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectStats {
    pub prefilter_s: f64,
    pub rpn_s: f64,
    pub rcnn_s: f64,
    pub total_s: f64,
    /// Masked fraction of all pyramid-level pixels (1 on the dense path).
    pub sparsity: f64,
    pub rpn_macs: u64,
    pub proposals: usize,
    pub verified: usize,
}

/// A proposal with everything needed to verify it.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub octave: u32,
    pub pred: CellPrediction,
    pub features: Vec<f64>,
    /// Box in original image coordinates.
    pub bbox: BBox,
}

pub struct Level {
    pub octave: u32,
    pub input: Tensor<f64>,
    pub mask: Option<RoiMask>,
}

fn to_original(p: Point, octave: u32) -> Point {
    let f = (1u64 << octave) as f64;
    [f * (p[0] + 0.5) - 0.5, f * (p[1] + 0.5) - 0.5]
}

fn box_to_original(b: &BBox, octave: u32) -> BBox {
    let f = (1u64 << octave) as f64;
    let [x, y] = to_original([b.x, b.y], octave);
    BBox::new(x, y, f * b.w, f * b.h)
}

/// Every octave `k` with `36 * 2^k <= min(width, height)`.
pub fn dense_levels(image: &GrayImage) -> Vec<Level> {
    let mut levels = Vec::new();
    let mut current = image.clone();
    let mut octave = 0;
    while MIN_FACE * (1u64 << octave) as f64 <= image.width().min(image.height()) as f64 {
        levels.push(Level { octave, input: image_input(&current), mask: None });
        current = current.downsample2();
        octave += 1;
    }
    levels
}

/// Pre-filter candidates grouped into octaves, one masked level per group.
pub fn roi_levels(image: &GrayImage, model: &DetectorModel, scan_opts: &ScanOptions) -> Result<Vec<Level>> {
    let out = scan(image, &model.cascade, scan_opts)?;
    let boxes: Vec<BBox> = out.detections.iter().map(|d| d.bbox).collect();
    let groups = group_candidates(&boxes, (image.width(), image.height()));
    let pyramid = build_roi_pyramid(image, &groups, receptive_field_size() as f64);
    Ok(pyramid
        .levels
        .into_iter()
        .map(|l| Level { octave: l.octave, input: image_input(&l.image), mask: Some(l.mask) })
        .collect())
}

/// Runs the proposal network on one level and decodes every scored cell at
/// or above `threshold`.
pub fn level_proposals(model: &DetectorModel, level: &Level, threshold: f64) -> Result<(Vec<Proposal>, RpnMaps, u64)> {
    let (maps, cells, macs) = match &level.mask {
        Some(mask) => {
            let (maps, m3, macs) = model.rpn.forward_roi(&level.input, mask)?;
            (maps, Some(m3), macs)
        }
        None => {
            let maps = model.rpn.forward(&level.input)?;
            (maps, None, 0)
        }
    };
    let (_, rows, cols) = maps.head.chw()?;
    let mut out = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            if cells.as_ref().is_some_and(|m| !m.get(col, row)) {
                continue;
            }
            let Some(pred) = decode(&head_at(&maps, col, row), col, row) else { continue };
            if pred.score < threshold || !pred.score.is_finite() {
                continue;
            }
            let bbox = box_to_original(&pred.bbox, level.octave);
            out.push(Proposal { octave: level.octave, features: features_at(&maps, col, row), bbox, pred });
        }
    }
    Ok((out, maps, macs))
}

fn as_detections(props: &[Proposal]) -> Vec<Detection> {
    props.iter().map(|p| Detection::new(p.bbox, p.pred.score)).collect()
}

/// Maps suppression output back onto the proposals it came from.
fn select(props: Vec<Proposal>, kept: &[Detection]) -> Vec<Proposal> {
    let mut used = vec![false; props.len()];
    let mut picks = Vec::with_capacity(kept.len());
    for d in kept {
        if let Some(i) = (0..props.len()).find(|&i| !used[i] && props[i].bbox == d.bbox && props[i].pred.score == d.score) {
            used[i] = true;
            picks.push(i);
        }
    }
    let mut slots: Vec<Option<Proposal>> = props.into_iter().map(Some).collect();
    picks.into_iter().filter_map(|i| slots[i].take()).collect()
}

/// NMS with the IoU threshold raised in steps of 0.05 from `base` until at
/// least `budget` proposals survive, truncated to `budget`.
pub fn budget_matched_nms(dets: &[Detection], base: f64, budget: usize) -> Result<Vec<Detection>> {
    let mut t = base;
    loop {
        let kept = nms(dets, t)?;
        if kept.len() >= budget || t >= 1.0 {
            return Ok(kept.into_iter().take(budget).collect());
        }
        t = (t + 0.05).min(1.0);
    }
}

pub fn suppress_proposals(props: Vec<Proposal>, opts: &DetectOptions) -> Result<Vec<Proposal>> {
    if props.is_empty() {
        return Ok(props);
    }
    let dets = as_detections(&props);
    let kept = match opts.suppression {
        Suppression::NonTopK { k } => non_top_k(&dets, opts.iou_threshold, k)?,
        Suppression::Nms => nms(&dets, opts.iou_threshold)?,
        Suppression::NmsMatched { k } => {
            let budget = non_top_k(&dets, opts.iou_threshold, k)?.len();
            budget_matched_nms(&dets, opts.iou_threshold, budget)?
        }
    };
    Ok(select(props, &kept))
}

pub fn detect(image: &GrayImage, model: &DetectorModel, opts: &DetectOptions) -> Result<Vec<Detection>> {
    Ok(detect_with_stats(image, model, opts)?.0)
}

pub fn detect_with_stats(image: &GrayImage, model: &DetectorModel, opts: &DetectOptions) -> Result<(Vec<Detection>, DetectStats)> {
    let start = Instant::now();
    let mut stats = DetectStats::default();
    if image.width() == 0 || image.height() == 0 {
        return Ok((Vec::new(), stats));
    }
    let levels = if opts.use_roi_conv {
        let t = Instant::now();
        let levels = roi_levels(image, model, &opts.scan)?;
        stats.prefilter_s = t.elapsed().as_secs_f64();
        levels
    } else {
        dense_levels(image)
    };
    let (mut masked, mut pixels) = (0usize, 0usize);
    for l in &levels {
        let (_, h, w) = l.input.chw()?;
        pixels += h * w;
        masked += l.mask.as_ref().map_or(h * w, |m| m.count());
    }
    stats.sparsity = if opts.use_roi_conv {
        let full: usize = dense_levels(image).iter().map(|l| l.input.len()).sum();
        masked as f64 / full.max(1) as f64
    } else {
        masked as f64 / pixels.max(1) as f64
    };

    let t = Instant::now();
    let threshold = opts.rpn_threshold.unwrap_or(model.rpn_threshold);
    let mut props = Vec::new();
    for l in &levels {
        let (p, _, macs) = level_proposals(model, l, threshold)?;
        stats.rpn_macs += macs;
        props.extend(p);
    }
    stats.rpn_s = t.elapsed().as_secs_f64();
    stats.proposals = props.len();

    let t = Instant::now();
    let kept = suppress_proposals(props, opts)?;
    stats.verified = kept.len();
    let verdict_threshold = opts.verdict_threshold.unwrap_or(model.verdict_threshold);
    let mut faces = Vec::new();
    for p in &kept {
        let level = levels.iter().find(|l| l.octave == p.octave).expect("proposal level exists");
        let rect = match model.rectify(&level.input, &p.pred) {
            Ok(r) => r,
            Err(Error::Singular { .. }) | Err(Error::Invalid(_)) => continue,
            Err(e) => return Err(e),
        };
        let score = model.verify(&rect.crop, &p.features)?;
        if score < verdict_threshold {
            continue;
        }
        let mut d = Detection::new(p.bbox, score);
        if let Some(lm) = &p.pred.landmarks {
            d = d.with_landmarks(LandmarkSet::new(lm.iter().map(|&q| to_original(q, p.octave)).collect())?);
        }
        faces.push(d);
    }
    let faces = if faces.is_empty() { faces } else { nms(&faces, opts.final_nms)? };
    stats.rcnn_s = t.elapsed().as_secs_f64();
    stats.total_s = start.elapsed().as_secs_f64();
    Ok((faces, stats))
}

/// Runs [`detect_with_stats`] over a batch, splitting images across
/// `workers` threads; results keep the input order.
pub fn detect_all(images: &[GrayImage], model: &DetectorModel, opts: &DetectOptions, workers: usize) -> Result<Vec<(Vec<Detection>, DetectStats)>> {
    let workers = workers.max(1).min(images.len().max(1));
    if workers == 1 {
        return images.iter().map(|im| detect_with_stats(im, model, opts)).collect();
    }
    let chunk = images.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = images
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|im| detect_with_stats(im, model, opts)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(images.len());
        for h in handles {
            out.extend(h.join().expect("detection worker panicked")?);
        }
        Ok(out)
    })
}

/// Verdict threshold that keeps at most `false_alarms` false alarms over
/// `val`; falls back to the model's current threshold when nothing fires.
pub fn select_verdict_threshold(model: &DetectorModel, val: &[AnnotatedSample], false_alarms: usize, opts: &DetectOptions) -> Result<f64> {
    let opts = DetectOptions { verdict_threshold: Some(0.0), ..*opts };
    let dets = val.iter().map(|s| detect(&s.image, model, &opts)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<Vec<BBox>> = val.iter().map(|s| s.faces.iter().map(|f| f.bbox).collect()).collect();
    let t = threshold_at_budget(&evaluate(&dets, &truth, MATCH_IOU, false_alarms));
    Ok(if t.is_finite() { t } else { model.verdict_threshold })
}

//! Greedy NMS and Non-top-K suppression over scored boxes.

use std::cmp::Ordering;

use crate::detection::Detection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionConfig {
    pub iou_threshold: f64,
    pub k: usize,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        SuppressionConfig { iou_threshold: 0.5, k: 3 }
    }
}

pub use crate::detection::BBox;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Score descending, then x, then y ascending.
fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
}

fn check(dets: &[Detection], threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!("IoU threshold {threshold} outside (0, 1]")));
    }
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::NonFinite(format!("detection score {}", d.score)));
    }
    Ok(())
}

/// Keeps the best box, drops everything overlapping it by at least the
/// threshold, repeats. Output is in rank order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    non_top_k(dets, iou_threshold, 1)
}

/// Each unclaimed highest-ranked box seeds a cluster of the unclaimed boxes
/// overlapping it by at least the threshold; the top `k` of every cluster
/// survive. `k = 1` is greedy NMS.
pub fn non_top_k(dets: &[Detection], iou_threshold: f64, k: usize) -> Result<Vec<Detection>> {
    check(dets, iou_threshold)?;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| rank(a, b));
    let mut claimed = vec![false; order.len()];
    let mut keep = Vec::new();
    for i in 0..order.len() {
        if claimed[i] {
            continue;
        }
        claimed[i] = true;
        keep.push(i);
        let mut taken = 1;
        for j in i + 1..order.len() {
            if !claimed[j] && order[i].bbox.iou(&order[j].bbox) >= iou_threshold {
                claimed[j] = true;
                if taken < k {
                    keep.push(j);
                    taken += 1;
                }
            }
        }
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| order[i].clone()).collect())
}

pub fn suppress(dets: &[Detection], config: &SuppressionConfig) -> Result<Vec<Detection>> {
    non_top_k(dets, config.iou_threshold, config.k)
}

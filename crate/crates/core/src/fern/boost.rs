//! Stagewise RealBoost over random ferns.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fern_index, CascadeModel, Fern, PatchView, Split, PARTITIONS, SPLITS_PER_FERN};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Smoothing added to both sums, relative to the total weight.
pub const SMOOTHING: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub num_ferns: usize,
    pub splits_per_fern: usize,
    pub candidate_pool: usize,
    /// Fraction of surviving positives each stage threshold must keep.
    pub per_stage_detection_target: f64,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_ferns: 1000,
            splits_per_fern: SPLITS_PER_FERN,
            candidate_pool: 200,
            per_stage_detection_target: 0.999,
            patch_size: super::DEFAULT_PATCH_SIZE,
            seed: 0,
        }
    }
}

/// Per-stage training statistics, one entry per fern.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Class-balanced exponential loss of the strong classifier.
    pub exp_loss: Vec<f64>,
    /// Class-balanced error of `sign(F)`, ignoring stage thresholds.
    pub training_error: Vec<f64>,
    /// Fraction of training positives still accepted by the cascade.
    pub positive_retention: Vec<f64>,
}

/// `½ ln((W⁺ + ε) / (W⁻ + ε))` per partition, `ε = 1e-4 · Σw`.
pub fn partition_scores(labels: &[bool], weights: &[f64], partition: &[usize]) -> Result<Box<[f64; PARTITIONS]>> {
    if labels.len() != weights.len() || labels.len() != partition.len() {
        return Err(Error::shape("labels, weights and partitions differ in length"));
    }
    let (wp, wn) = partition_sums(labels, weights, partition)?;
    let total: f64 = weights.iter().sum();
    Ok(scores_from_sums(&wp, &wn, SMOOTHING * total))
}

fn partition_sums(labels: &[bool], weights: &[f64], partition: &[usize]) -> Result<([f64; PARTITIONS], [f64; PARTITIONS])> {
    let mut wp = [0.0; PARTITIONS];
    let mut wn = [0.0; PARTITIONS];
    for ((&y, &w), &p) in labels.iter().zip(weights).zip(partition) {
        if p >= PARTITIONS {
            return Err(Error::Invalid(format!("partition {p} out of range")));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Invalid(format!("weight {w} must be finite and non-negative")));
        }
        if y {
            wp[p] += w;
        } else {
            wn[p] += w;
        }
    }
    Ok((wp, wn))
}

fn scores_from_sums(wp: &[f64; PARTITIONS], wn: &[f64; PARTITIONS], eps: f64) -> Box<[f64; PARTITIONS]> {
    let mut s = Box::new([0.0; PARTITIONS]);
    for i in 0..PARTITIONS {
        s[i] = 0.5 * ((wp[i] + eps) / (wn[i] + eps)).ln();
    }
    s
}

/// Identical (patch, label) pairs collapse into one weighted group so that
/// duplicating the training set leaves every computation unchanged.
struct Groups<'a> {
    patches: Vec<&'a GrayImage>,
    labels: Vec<bool>,
    counts: Vec<u64>,
}

fn group_samples<'a>(positives: &'a [GrayImage], negatives: &'a [GrayImage]) -> Groups<'a> {
    let mut index: HashMap<(&'a [u8], bool), usize> = HashMap::new();
    let mut g = Groups { patches: Vec::new(), labels: Vec::new(), counts: Vec::new() };
    let all = positives.iter().map(|p| (p, true)).chain(negatives.iter().map(|p| (p, false)));
    for (p, y) in all {
        match index.get(&(p.data(), y)) {
            Some(&i) => g.counts[i] += 1,
            None => {
                index.insert((p.data(), y), g.patches.len());
                g.patches.push(p);
                g.labels.push(y);
                g.counts.push(1);
            }
        }
    }
    g
}

/// Draws `theta` from the quantiles of the multiplicity-weighted difference
/// histogram of the chosen pixel pair.
fn draw_split(rng: &mut ChaCha8Rng, groups: &Groups<'_>, size: usize, hist: &mut [u64; 511]) -> Split {
    let coord = |rng: &mut ChaCha8Rng| rng.gen_range(0..size) as u16;
    let (x1, y1, x2, y2) = (coord(rng), coord(rng), coord(rng), coord(rng));
    hist.fill(0);
    let mut total = 0u64;
    for (p, &c) in groups.patches.iter().zip(&groups.counts) {
        let d = p.get(x1 as usize, y1 as usize) as i32 - p.get(x2 as usize, y2 as usize) as i32;
        hist[(d + 255) as usize] += c;
        total += c;
    }
    let q: f64 = rng.gen_range(0.0..1.0);
    let target = q * total as f64;
    let mut cum = 0u64;
    let mut theta = 255i16;
    for (i, &h) in hist.iter().enumerate() {
        cum += h;
        if cum as f64 > target {
            theta = i as i16 - 255;
            break;
        }
    }
    Split { x1, y1, x2, y2, theta }
}

/// Index of the `r`-th smallest score in multiplicity-expanded order.
fn threshold_at(scores: &[(f64, u64)], r: u64) -> f64 {
    let mut cum = 0u64;
    for &(s, c) in scores {
        cum += c;
        if cum > r {
            return s;
        }
    }
    scores.last().map_or(f64::NEG_INFINITY, |s| s.0)
}

pub fn train_cascade(positives: &[GrayImage], negatives: &[GrayImage], config: &TrainConfig) -> Result<(CascadeModel, TrainReport)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Training("both classes need at least one patch".into()));
    }
    if config.splits_per_fern != SPLITS_PER_FERN {
        return Err(Error::Invalid(format!("ferns have exactly {SPLITS_PER_FERN} splits")));
    }
    if config.candidate_pool == 0 || config.num_ferns == 0 {
        return Err(Error::Invalid("num_ferns and candidate_pool must be positive".into()));
    }
    if !(config.per_stage_detection_target > 0.0 && config.per_stage_detection_target <= 1.0) {
        return Err(Error::Invalid("detection target must lie in (0, 1]".into()));
    }
    let size = config.patch_size;
    if size == 0 || size > u16::MAX as usize {
        return Err(Error::Invalid(format!("patch size {size}")));
    }
    for p in positives.iter().chain(negatives) {
        if p.width() != size || p.height() != size {
            return Err(Error::shape(format!("training patch is {}x{}, expected {size}x{size}", p.width(), p.height())));
        }
    }

    let groups = group_samples(positives, negatives);
    let n = groups.patches.len();
    let n_pos = positives.len() as f64;
    let n_neg = negatives.len() as f64;
    let class_weight = |y: bool| if y { 0.5 / n_pos } else { 0.5 / n_neg };
    let initial: Vec<f64> = (0..n).map(|i| class_weight(groups.labels[i]) * groups.counts[i] as f64).collect();
    let mut weights = initial.clone();
    let mut strong = vec![0.0; n];
    let mut alive: Vec<bool> = groups.labels.clone();
    let total_pos: u64 = (0..n).filter(|&i| groups.labels[i]).map(|i| groups.counts[i]).sum();

    let views: Vec<PatchView<'_>> = groups.patches.iter().map(|p| PatchView::whole(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut hist = [0u64; 511];
    let mut idx = vec![0usize; n];
    let mut best_idx = vec![0usize; n];
    let mut ferns = Vec::with_capacity(config.num_ferns);
    let mut thresholds = Vec::with_capacity(config.num_ferns);
    let mut report = TrainReport::default();

    for stage in 0..config.num_ferns {
        let mut best: Option<(f64, Fern)> = None;
        for _ in 0..config.candidate_pool {
            let splits: [Split; SPLITS_PER_FERN] = std::array::from_fn(|_| draw_split(&mut rng, &groups, size, &mut hist));
            let fern = Fern { splits, scores: Box::new([0.0; PARTITIONS]) };
            let mut wp = [0.0; PARTITIONS];
            let mut wn = [0.0; PARTITIONS];
            let first = fern_index(&views[0], &fern);
            let mut constant = true;
            for i in 0..n {
                let k = fern_index(&views[i], &fern);
                constant &= k == first;
                idx[i] = k;
                if groups.labels[i] {
                    wp[k] += weights[i];
                } else {
                    wn[k] += weights[i];
                }
            }
            if constant {
                continue;
            }
            let z: f64 = wp.iter().zip(&wn).map(|(a, b)| 2.0 * (a * b).sqrt()).sum();
            if best.as_ref().is_none_or(|(bz, _)| z < *bz) {
                best = Some((z, fern));
                best_idx.copy_from_slice(&idx);
            }
        }
        let Some((_, mut fern)) = best else {
            return Err(Error::Training(format!(
                "stage {stage}: all {} candidate ferns put every sample in one partition",
                config.candidate_pool
            )));
        };
        let (wp, wn) = partition_sums(&groups.labels, &weights, &best_idx)?;
        let total: f64 = weights.iter().sum();
        fern.scores = scores_from_sums(&wp, &wn, SMOOTHING * total);

        for i in 0..n {
            let f = fern.scores[best_idx[i]];
            strong[i] += f;
            let y = if groups.labels[i] { 1.0 } else { -1.0 };
            weights[i] *= (-y * f).exp();
        }
        let z: f64 = weights.iter().sum();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Training(format!("stage {stage}: weights collapsed (sum {z})")));
        }
        weights.iter_mut().for_each(|w| *w /= z);

        let mut surviving: Vec<(f64, u64)> = (0..n).filter(|&i| alive[i]).map(|i| (strong[i], groups.counts[i])).collect();
        surviving.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n_alive: u64 = surviving.iter().map(|s| s.1).sum();
        let r = ((1.0 - config.per_stage_detection_target) * n_alive as f64).floor() as u64;
        let threshold = threshold_at(&surviving, r);
        for i in 0..n {
            if alive[i] && strong[i] < threshold {
                alive[i] = false;
            }
        }
        thresholds.push(threshold);
        ferns.push(fern);

        let mut loss = 0.0;
        let mut err = 0.0;
        let mut kept = 0u64;
        for i in 0..n {
            let y = if groups.labels[i] { 1.0 } else { -1.0 };
            loss += initial[i] * (-y * strong[i]).exp();
            if (strong[i] > 0.0) != groups.labels[i] {
                err += initial[i];
            }
            if alive[i] {
                kept += groups.counts[i];
            }
        }
        report.exp_loss.push(loss);
        report.training_error.push(err);
        report.positive_retention.push(kept as f64 / total_pos as f64);
    }
    Ok((CascadeModel::new(ferns, thresholds, size)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_partition_scores_zero() {
        let s = partition_scores(&[true, false], &[0.5, 0.5], &[3, 3]).unwrap();
        assert_eq!(s[3], 0.0);
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn nine_to_one_gives_half_log_nine() {
        let s = partition_scores(&[true, false], &[0.9, 0.1], &[7, 7]).unwrap();
        let want = 0.5 * ((0.9 + 1e-4) / (0.1 + 1e-4f64)).ln();
        assert!((s[7] - want).abs() < 1e-15);
        assert!((s[7] - 1.0986).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_partition_and_weight() {
        assert!(partition_scores(&[true], &[1.0], &[256]).is_err());
        assert!(partition_scores(&[true], &[-1.0], &[0]).is_err());
        assert!(partition_scores(&[true], &[1.0], &[]).is_err());
    }

    #[test]
    fn threshold_indexing_counts_multiplicity() {
        let s = [(-1.0, 2), (0.5, 1), (2.0, 3)];
        assert_eq!(threshold_at(&s, 0), -1.0);
        assert_eq!(threshold_at(&s, 1), -1.0);
        assert_eq!(threshold_at(&s, 2), 0.5);
        assert_eq!(threshold_at(&s, 5), 2.0);
    }

    #[test]
    fn constant_patches_are_degenerate() {
        let flat = vec![GrayImage::from_fn(8, 8, |_, _| 100)];
        let cfg = TrainConfig { num_ferns: 1, candidate_pool: 5, patch_size: 8, ..TrainConfig::default() };
        let err = train_cascade(&flat, &flat, &cfg).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
    }
}

//! Training drivers: fern pre-filter, proposal network pre-training and
//! end-to-end training with learnable canonical positions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stnface_core::fern::{train_cascade, CascadeModel, TrainConfig, TrainReport};
use stnface_core::image::GrayImage;
use stnface_core::nn::{concat_backward, softmax_cross_entropy, Dense, Layer, Sgd};
use stnface_core::roi::MIN_FACE;
use stnface_core::stn::{warp_with_gradients, LandmarkSet, Point};
use stnface_core::{BBox, Error, Result, Tensor};

use crate::config::DetectorConfig;
use crate::model::DetectorModel;
use crate::rcnn::Rcnn;
use crate::rpn::{cell_center, decode, features_at, head_at, image_input, regression_target, CellPrediction, Rpn, RpnMaps, LANDMARK_REF};
use crate::synth::{AnnotatedSample, Face};

/// Cells within this L-infinity distance of a face centre are positives.
pub const POSITIVE_RADIUS: f64 = 5.0;
/// Cells farther than this from every face centre are negatives.
pub const NEGATIVE_RADIUS: f64 = 12.0;

fn cascade_config(cfg: &DetectorConfig) -> TrainConfig {
    TrainConfig {
        num_ferns: cfg.cascade_ferns,
        candidate_pool: cfg.cascade_pool,
        per_stage_detection_target: cfg.cascade_target,
        seed: cfg.seed,
        ..TrainConfig::default()
    }
}

fn square_patch(img: &GrayImage, cx: f64, cy: f64, side: f64, out: usize) -> Option<GrayImage> {
    let x0 = (cx - side / 2.0).round();
    let y0 = (cy - side / 2.0).round();
    let s = side.round();
    if x0 < 0.0 || y0 < 0.0 || x0 + s > img.width() as f64 || y0 + s > img.height() as f64 || s < 1.0 {
        return None;
    }
    Some(img.crop(x0 as usize, y0 as usize, s as usize, s as usize).resize(out, out))
}

/// Jittered face crops and random background windows, all at the fern patch
/// size. Jitter spans the scan's scale step and stride.
pub fn cascade_patches(corpus: &[AnnotatedSample], cfg: &DetectorConfig) -> (Vec<GrayImage>, Vec<GrayImage>) {
    let size = TrainConfig::default().patch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in corpus {
        for f in &s.faces {
            let (cx, cy) = f.bbox.center();
            for j in 0..3 {
                let (scale, dx, dy) = if j == 0 {
                    (1.0, 0.0, 0.0)
                } else {
                    (2f64.powf(rng.gen_range(-1.0 / 6.0..1.0 / 6.0)), rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06))
                };
                let side = f.bbox.size() * scale;
                if let Some(p) = square_patch(&s.image, cx + dx * side, cy + dy * side, side, size) {
                    pos.push(p);
                }
            }
        }
        let (w, h) = (s.image.width() as f64, s.image.height() as f64);
        let max_side = (2.0 * MIN_FACE * 1.26).min(w.min(h));
        let mut drawn = 0;
        for _ in 0..cfg.cascade_negatives * 20 {
            if drawn == cfg.cascade_negatives || max_side < MIN_FACE {
                break;
            }
            let side = rng.gen_range(MIN_FACE..=max_side);
            let b = BBox::new(rng.gen_range(0.0..=w - side), rng.gen_range(0.0..=h - side), side, side);
            if s.faces.iter().any(|f| f.bbox.iou(&b) >= 0.3) {
                continue;
            }
            let (cx, cy) = b.center();
            if let Some(p) = square_patch(&s.image, cx, cy, side, size) {
                neg.push(p);
                drawn += 1;
            }
        }
    }
    (pos, neg)
}

pub fn train_prefilter(corpus: &[AnnotatedSample], cfg: &DetectorConfig) -> Result<(CascadeModel, TrainReport)> {
    let (pos, neg) = cascade_patches(corpus, cfg);
    train_cascade(&pos, &neg, &cascade_config(cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLabel {
    Positive(usize),
    Negative,
    Ignore,
}

fn in_octave(f: &Face) -> bool {
    (MIN_FACE..2.0 * MIN_FACE).contains(&f.bbox.size())
}

/// Labels every output cell of a `cols x rows` map for faces given at level
/// resolution.
pub fn cell_labels(faces: &[Face], cols: usize, rows: usize) -> Vec<CellLabel> {
    let mut out = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            let [x, y] = cell_center(col, row);
            let mut label = CellLabel::Negative;
            let mut best = f64::INFINITY;
            for (i, f) in faces.iter().enumerate() {
                let (fx, fy) = f.bbox.center();
                let d = (x - fx).abs().max((y - fy).abs());
                let ignore_radius = if in_octave(f) { NEGATIVE_RADIUS } else { NEGATIVE_RADIUS.max(f.bbox.size() / 2.0) };
                if in_octave(f) && d <= POSITIVE_RADIUS && d < best {
                    best = d;
                    label = CellLabel::Positive(i);
                } else if d <= ignore_radius && label == CellLabel::Negative {
                    label = CellLabel::Ignore;
                }
            }
            out.push(label);
        }
    }
    out
}

/// Per-image proposal statistics, summed over cells.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RpnStats {
    pub classification: f64,
    pub landmark: f64,
    pub pos_correct: usize,
    pub pos_total: usize,
    pub neg_correct: usize,
    pub neg_total: usize,
    /// Summed landmark (or box centre) error in pixels over positive cells.
    pub point_error: f64,
    /// The same errors rescaled to a face of side `MIN_FACE`.
    pub scaled_point_error: f64,
    pub point_count: usize,
    pub images: usize,
}

impl RpnStats {
    pub fn add(&mut self, o: &RpnStats) {
        self.classification += o.classification;
        self.landmark += o.landmark;
        self.pos_correct += o.pos_correct;
        self.pos_total += o.pos_total;
        self.neg_correct += o.neg_correct;
        self.neg_total += o.neg_total;
        self.point_error += o.point_error;
        self.scaled_point_error += o.scaled_point_error;
        self.point_count += o.point_count;
        self.images += o.images;
    }

    pub fn loss(&self, lambda: f64) -> f64 {
        (self.classification + lambda * self.landmark) / self.images.max(1) as f64
    }

    /// Mean of the per-class accuracies, so chance is 0.5 however skewed
    /// the cell labels are.
    pub fn balanced_accuracy(&self) -> f64 {
        let p = self.pos_correct as f64 / self.pos_total.max(1) as f64;
        let n = self.neg_correct as f64 / self.neg_total.max(1) as f64;
        match (self.pos_total, self.neg_total) {
            (0, 0) => 0.0,
            (0, _) => n,
            (_, 0) => p,
            _ => 0.5 * (p + n),
        }
    }

    pub fn mean_point_error(&self) -> f64 {
        self.point_error / self.point_count.max(1) as f64
    }

    /// Mean error as if every face were `MIN_FACE` pixels wide.
    pub fn mean_scaled_point_error(&self) -> f64 {
        self.scaled_point_error / self.point_count.max(1) as f64
    }
}

/// Class-balanced cross-entropy over labelled cells plus `lambda` times the
/// summed squared regression error, averaged over positive cells. Returns the
/// statistics and the gradient with respect to the head map.
pub fn rpn_image_loss(head: &Tensor<f64>, faces: &[Face], landmarks: bool, lambda: f64) -> Result<(RpnStats, Tensor<f64>)> {
    let (c, rows, cols) = head.chw()?;
    let labels = cell_labels(faces, cols, rows);
    let n_pos = labels.iter().filter(|l| matches!(l, CellLabel::Positive(_))).count();
    let n_neg = labels.iter().filter(|l| **l == CellLabel::Negative).count();
    let w_pos = if n_pos > 0 { 0.5 / n_pos as f64 } else { 0.0 };
    let w_neg = if n_neg > 0 { 0.5 / n_neg as f64 } else { 0.0 };
    let mut grad = Tensor::zeros(head.shape());
    let mut st = RpnStats { images: 1, ..Default::default() };
    let plane = rows * cols;
    let hd = head.data();
    for (cell, label) in labels.iter().enumerate() {
        let (row, col) = (cell / cols, cell % cols);
        let (cls, weight) = match label {
            CellLabel::Positive(_) => (1, w_pos),
            CellLabel::Negative => (0, w_neg),
            CellLabel::Ignore => continue,
        };
        let logits = [hd[cell], hd[plane + cell]];
        let (l, g) = softmax_cross_entropy(&logits, cls)?;
        st.classification += weight * l;
        let correct = (logits[1] > logits[0]) == (cls == 1);
        let gd = grad.data_mut();
        gd[cell] += weight * g[0];
        gd[plane + cell] += weight * g[1];
        if let CellLabel::Positive(i) = *label {
            st.pos_total += 1;
            st.pos_correct += correct as usize;
            let f = &faces[i];
            let target = regression_target(landmarks, &f.bbox, &f.landmarks, col, row);
            let pred: Vec<f64> = (2..c).map(|k| hd[k * plane + cell]).collect();
            let sq: f64 = pred.iter().zip(&target).map(|(p, t)| (p - t).powi(2)).sum();
            st.landmark += sq / n_pos as f64;
            for (k, (p, t)) in pred.iter().zip(&target).enumerate() {
                gd[(k + 2) * plane + cell] += lambda * 2.0 * (p - t) / n_pos as f64;
            }
            let pairs = if landmarks { 5 } else { 1 };
            for k in 0..pairs {
                let dx = (pred[2 * k] - target[2 * k]) * LANDMARK_REF;
                let dy = (pred[2 * k + 1] - target[2 * k + 1]) * LANDMARK_REF;
                let e = (dx * dx + dy * dy).sqrt();
                st.point_error += e;
                st.scaled_point_error += e * MIN_FACE / f.bbox.w;
                st.point_count += 1;
            }
        } else {
            st.neg_total += 1;
            st.neg_correct += correct as usize;
        }
    }
    Ok((st, grad))
}

fn check_finite(what: &str, epoch: usize, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Training(format!("{what} diverged in epoch {epoch} (loss {v}); lower the learning rate")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpnEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub balanced_accuracy: f64,
    pub landmark_error_px: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RpnReport {
    pub epochs: Vec<RpnEpoch>,
}

/// Proposal-network statistics on a corpus without updating anything.
pub fn evaluate_rpn(rpn: &Rpn, corpus: &[AnnotatedSample], lambda: f64) -> Result<RpnStats> {
    let mut total = RpnStats::default();
    for s in corpus {
        let maps = rpn.forward(&image_input(&s.image))?;
        total.add(&rpn_image_loss(&maps.head, &s.faces, rpn.landmarks, lambda)?.0);
    }
    Ok(total)
}

/// Pre-trains a freshly initialised proposal network.
pub fn train_rpn(corpus: &[AnnotatedSample], cfg: &DetectorConfig) -> Result<(Rpn, RpnReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rpn = Rpn::new(cfg.rpn_channels, cfg.landmarks, &mut rng)?;
    continue_rpn(rpn, corpus, cfg, cfg.rpn_epochs)
}

pub fn continue_rpn(mut rpn: Rpn, corpus: &[AnnotatedSample], cfg: &DetectorConfig, epochs: usize) -> Result<(Rpn, RpnReport)> {
    if corpus.is_empty() {
        return Err(Error::Training("empty training corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = Sgd::new(cfg.lr_rpn, cfg.momentum);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut report = RpnReport::default();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut stats = RpnStats::default();
        for batch in order.chunks(cfg.batch) {
            let mut acc = rpn.zeros_like();
            for &i in batch {
                let s = &corpus[i];
                let (maps, cache) = rpn.forward_cached(&image_input(&s.image))?;
                let (st, d_head) = rpn_image_loss(&maps.head, &s.faces, rpn.landmarks, cfg.lambda)?;
                check_finite("proposal network", epoch, st.loss(cfg.lambda))?;
                stats.add(&st);
                acc.accumulate(&rpn.backward(&cache, &d_head, None)?);
            }
            let scale = 1.0 / batch.len() as f64;
            let grads: Vec<Vec<f64>> = acc.params().iter().map(|g| g.iter().map(|v| v * scale).collect()).collect();
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            opt.step(&mut rpn.params_mut(), &grad_refs)?;
        }
        let loss = stats.loss(cfg.lambda);
        check_finite("proposal network", epoch, loss)?;
        report.epochs.push(RpnEpoch {
            epoch,
            loss,
            balanced_accuracy: stats.balanced_accuracy(),
            landmark_error_px: stats.mean_point_error(),
        });
    }
    Ok((rpn, report))
}

/// A proposal drawn for verification training, with its face/background label.
#[derive(Debug, Clone)]
pub struct Sample {
    pub pred: CellPrediction,
    pub face: bool,
}

/// Up to `k` positives (predicted box IoU >= 0.5 with a face, drawn at
/// random) and `k` negatives (IoU < `negative_iou` with every face, drawn
/// from the `3k` highest-scoring ones).
pub fn sample_candidates<R: Rng>(maps: &RpnMaps, faces: &[Face], k: usize, negative_iou: f64, rng: &mut R) -> Vec<Sample> {
    let (_, rows, cols) = maps.head.chw().expect("3-d head");
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let Some(pred) = decode(&head_at(maps, col, row), col, row) else { continue };
            let best = faces.iter().map(|f| f.bbox.iou(&pred.bbox)).fold(0.0, f64::max);
            if best >= 0.5 {
                pos.push(pred);
            } else if best < negative_iou {
                neg.push(pred);
            }
        }
    }
    pos.shuffle(rng);
    neg.sort_by(|a, b| b.score.total_cmp(&a.score));
    neg.truncate(3 * k);
    neg.shuffle(rng);
    pos.into_iter()
        .take(k)
        .map(|pred| Sample { pred, face: true })
        .chain(neg.into_iter().take(k).map(|pred| Sample { pred, face: false }))
        .collect()
}

/// Gradients of one candidate's verdict loss.
#[derive(Debug, Clone)]
pub struct CandidateGrads {
    pub loss: f64,
    pub correct: bool,
    /// Gradient on the head vector at the candidate's cell.
    pub d_head: Vec<f64>,
    pub d_features: Vec<f64>,
    /// Empty for the box head.
    pub d_canonical: Vec<Point>,
    pub rcnn: Rcnn,
    pub verdict: Dense,
}

/// Warps, verifies and backpropagates one candidate. Fails with
/// `Error::Singular` for degenerate landmark sets.
pub fn candidate_step(model: &DetectorModel, source: &Tensor<f64>, pred: &CellPrediction, rpn_features: &[f64], face: bool) -> Result<CandidateGrads> {
    let rect = model.rectify(source, pred)?;
    let (f, cache) = model.rcnn.forward_cached(&rect.crop)?;
    let x = model.verdict_input(rpn_features, &f);
    let logits = model.verdict.forward(&x)?;
    let (loss, d_logits) = softmax_cross_entropy(&logits, face as usize)?;
    let correct = (logits[1] > logits[0]) == face;
    let (d_x, g_verdict) = model.verdict.backward(&x, &d_logits)?;
    let (mut d_features, d_f) = concat_backward(&d_x, rpn_features.len());
    if !model.concat {
        d_features.iter_mut().for_each(|v| *v = 0.0);
    }
    let (d_crop, g_rcnn) = model.rcnn.backward(&cache, &d_f)?;
    let mut d_head = vec![0.0; model.rpn.head_outputs()];
    let mut d_canonical = Vec::new();
    if let Some(lm) = &pred.landmarks {
        let g = warp_with_gradients(&d_crop, source, &LandmarkSet::new(lm.to_vec())?, &model.canonical)?;
        for (k, d) in g.d_landmarks.iter().enumerate() {
            d_head[2 + 2 * k] = d[0] * LANDMARK_REF;
            d_head[3 + 2 * k] = d[1] * LANDMARK_REF;
        }
        d_canonical = g.d_canonical;
    }
    Ok(CandidateGrads { loss, correct, d_head, d_features, d_canonical, rcnn: g_rcnn, verdict: g_verdict })
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eEpoch {
    pub epoch: usize,
    pub rpn_loss: f64,
    pub verdict_loss: f64,
    pub verdict_accuracy: f64,
    pub landmark_error_px: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct E2eReport {
    pub epochs: Vec<E2eEpoch>,
    /// Canonical positions after every update step, starting with the init.
    pub canonical_trace: Vec<Vec<Point>>,
    pub skipped_singular: usize,
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// Adds the RCNN, the verdict head and the canonical shape on top of a
/// pre-trained proposal network and trains everything jointly.
pub fn train_end_to_end(corpus: &[AnnotatedSample], cascade: CascadeModel, rpn_init: Rpn, cfg: &DetectorConfig) -> Result<(DetectorModel, E2eReport)> {
    if corpus.is_empty() {
        return Err(Error::Training("empty training corpus".into()));
    }
    if rpn_init.landmarks != cfg.landmarks {
        return Err(Error::Invalid("proposal head type does not match the configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut model = DetectorModel::new(cfg, cascade, rpn_init, &mut rng)?;
    let mut opt_rpn = Sgd::new(cfg.lr_e2e_rpn, cfg.momentum);
    let mut opt_rcnn = Sgd::new(cfg.lr_e2e, cfg.momentum);
    let mut opt_verdict = Sgd::new(cfg.lr_e2e, cfg.momentum);
    let mut opt_canonical = Sgd::new(cfg.lr_canonical, cfg.momentum);
    let mut report = E2eReport { canonical_trace: vec![model.canonical.points().to_vec()], ..Default::default() };
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.e2e_epochs {
        order.shuffle(&mut rng);
        let mut rpn_stats = RpnStats::default();
        let (mut v_loss, mut v_correct, mut v_total) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch) {
            let mut g_rpn = model.rpn.zeros_like();
            let mut g_rcnn = model.rcnn.zeros_like();
            let mut g_verdict = model.verdict.zeros_like();
            let mut g_canonical = vec![[0.0; 2]; model.canonical.len()];
            for &i in batch {
                let s = &corpus[i];
                let input = image_input(&s.image);
                let (maps, cache) = model.rpn.forward_cached(&input)?;
                let (st, mut d_head) = rpn_image_loss(&maps.head, &s.faces, model.rpn.landmarks, cfg.lambda)?;
                check_finite("end-to-end proposal loss", epoch, st.loss(cfg.lambda))?;
                rpn_stats.add(&st);
                let mut d_feat = Tensor::zeros(maps.features.shape());
                let samples = sample_candidates(&maps, &s.faces, cfg.samples_per_image, cfg.negative_iou, &mut rng);
                let (_, rows, cols) = maps.head.chw()?;
                let mut grads = Vec::new();
                for smp in &samples {
                    let feats = features_at(&maps, smp.pred.col, smp.pred.row);
                    match candidate_step(&model, &input, &smp.pred, &feats, smp.face) {
                        Ok(g) => grads.push((g, smp)),
                        Err(Error::Singular { .. }) => report.skipped_singular += 1,
                        Err(e) => return Err(e),
                    }
                }
                let w = 1.0 / grads.len().max(1) as f64;
                for (g, smp) in &grads {
                    let cell = smp.pred.row * cols + smp.pred.col;
                    for (k, v) in g.d_head.iter().enumerate() {
                        d_head.data_mut()[k * rows * cols + cell] += w * cfg.warp_weight * v;
                    }
                    for (k, v) in g.d_features.iter().enumerate() {
                        d_feat.data_mut()[k * rows * cols + cell] += w * v;
                    }
                    for (acc, d) in g_canonical.iter_mut().zip(&g.d_canonical) {
                        acc[0] += w * d[0];
                        acc[1] += w * d[1];
                    }
                    let mut r = g.rcnn.clone();
                    r.conv1.scale(w);
                    r.conv2.scale(w);
                    r.conv3.scale(w);
                    r.fc.scale(w);
                    g_rcnn.accumulate(&r);
                    let mut v = g.verdict.clone();
                    v.scale(w);
                    g_verdict.accumulate(&v);
                    v_loss += g.loss;
                    v_correct += g.correct as usize;
                    v_total += 1;
                }
                g_rpn.accumulate(&model.rpn.backward(&cache, &d_head, Some(&d_feat))?);
            }
            let scale = 1.0 / batch.len() as f64;
            let step = |opt: &mut Sgd, params: Vec<&mut [f64]>, grads: Vec<&[f64]>| -> Result<()> {
                let owned: Vec<Vec<f64>> = grads.iter().map(|g| scaled(g, scale)).collect();
                let refs: Vec<&[f64]> = owned.iter().map(|g| g.as_slice()).collect();
                let mut params = params;
                opt.step(&mut params, &refs)
            };
            step(&mut opt_rpn, model.rpn.params_mut(), g_rpn.params())?;
            step(&mut opt_rcnn, model.rcnn.params_mut(), g_rcnn.params())?;
            step(&mut opt_verdict, model.verdict.params_mut(), g_verdict.params())?;
            if model.canonical.trainable {
                let mut flat: Vec<f64> = model.canonical.points().iter().flatten().copied().collect();
                let grad: Vec<f64> = g_canonical.iter().flatten().map(|v| v * scale).collect();
                opt_canonical.step(&mut [&mut flat], &[&grad])?;
                for (p, c) in model.canonical.points_mut().iter_mut().zip(flat.chunks(2)) {
                    *p = [c[0], c[1]];
                }
                model.canonical.clamp_to(stnface_core::stn::RECTIFIED_SIZE);
                report.canonical_trace.push(model.canonical.points().to_vec());
            }
        }
        let verdict_loss = v_loss / v_total.max(1) as f64;
        check_finite("verdict", epoch, verdict_loss)?;
        report.epochs.push(E2eEpoch {
            epoch,
            rpn_loss: rpn_stats.loss(cfg.lambda),
            verdict_loss,
            verdict_accuracy: v_correct as f64 / v_total.max(1) as f64,
            landmark_error_px: rpn_stats.mean_point_error(),
        });
    }
    Ok((model, report))
}

/// Verdict accuracy on candidates drawn the same way as in training, with a
/// fixed sampling seed so different models see comparable draws.
pub fn verdict_accuracy(model: &DetectorModel, corpus: &[AnnotatedSample], k: usize, negative_iou: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut correct, mut total) = (0usize, 0usize);
    for s in corpus {
        let input = image_input(&s.image);
        let maps = model.rpn.forward(&input)?;
        for smp in sample_candidates(&maps, &s.faces, k, negative_iou, &mut rng) {
            let feats = features_at(&maps, smp.pred.col, smp.pred.row);
            let p = match model.rectify(&input, &smp.pred) {
                Ok(r) => model.verify(&r.crop, &feats)?,
                Err(Error::Singular { .. }) => continue,
                Err(e) => return Err(e),
            };
            correct += ((p > 0.5) == smp.face) as usize;
            total += 1;
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}

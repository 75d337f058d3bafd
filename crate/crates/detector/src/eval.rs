//! Score-ordered matching against ground truth, precision/recall sweeps and
//! recall at a false-alarm budget.

use stnface_core::{BBox, Detection};

pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_alarms: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        Summary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// One point per distinct score, thresholds descending.
    pub pr_curve: Vec<PrPoint>,
    pub false_alarm_budget: usize,
    pub recall_at_budget: f64,
    pub ground_truth: usize,
    pub timings: Vec<f64>,
    pub sparsity: Summary,
}

/// Greedy matching inside one image: detections in descending score take
/// the unmatched ground truth with the highest IoU, if it reaches
/// `iou_threshold`. Returns a true-positive flag per detection, in input order.
pub fn match_image(dets: &[Detection], truth: &[BBox], iou_threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; truth.len()];
    let mut tp = vec![false; dets.len()];
    for i in order {
        let best = (0..truth.len())
            .filter(|&g| !taken[g])
            .map(|g| (g, dets[i].bbox.iou(&truth[g])))
            .filter(|&(_, v)| v >= iou_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[i] = true;
        }
    }
    tp
}

/// Evaluates a detector over an image set. `detections[i]` and `truth[i]`
/// belong to the same image.
pub fn evaluate(detections: &[Vec<Detection>], truth: &[Vec<BBox>], iou_threshold: f64, false_alarm_budget: usize) -> EvalReport {
    assert_eq!(detections.len(), truth.len(), "detections and ground truth must cover the same images");
    let n_gt: usize = truth.iter().map(Vec::len).sum();
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for (d, t) in detections.iter().zip(truth) {
        scored.extend(d.iter().map(|x| x.score).zip(match_image(d, t, iou_threshold)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall_at_budget = 0.0;
    let recall = |tp: usize| if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if fp <= false_alarm_budget {
            recall_at_budget = recall(tp);
        }
        curve.push(PrPoint { threshold: s, precision: tp as f64 / (tp + fp) as f64, recall: recall(tp), true_positives: tp, false_alarms: fp });
    }
    EvalReport {
        pr_curve: curve,
        false_alarm_budget,
        recall_at_budget,
        ground_truth: n_gt,
        timings: Vec::new(),
        sparsity: Summary::default(),
    }
}

/// Lowest score threshold whose false alarms stay within the budget.
pub fn threshold_at_budget(report: &EvalReport) -> f64 {
    report
        .pr_curve
        .iter()
        .take_while(|p| p.false_alarms <= report.false_alarm_budget)
        .last()
        .map_or(f64::INFINITY, |p| p.threshold)
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "ground truth: {}\nrecall at {} false alarms: {:.4}\n",
            self.ground_truth, self.false_alarm_budget, self.recall_at_budget
        );
        if !self.timings.is_empty() {
            let t = Summary::of(&self.timings);
            s += &format!("time per image: mean {:.2} ms, min {:.2} ms, max {:.2} ms\n", t.mean * 1e3, t.min * 1e3, t.max * 1e3);
            s += &format!("mask sparsity: mean {:.3}, min {:.3}, max {:.3}\n", self.sparsity.mean, self.sparsity.min, self.sparsity.max);
        }
        s += "threshold,precision,recall,true_positives,false_alarms\n";
        for p in &self.pr_curve {
            s += &format!("{:.6},{:.6},{:.6},{},{}\n", p.threshold, p.precision, p.recall, p.true_positives, p.false_alarms);
        }
        s
    }
}

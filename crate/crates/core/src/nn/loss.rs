use crate::error::{Error, Result};

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Invalid("softmax over zero logits".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Cross-entropy of `softmax(logits)` against a class index.
/// Returns `(loss, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Invalid(format!("label {label} out of {} classes", logits.len())));
    }
    let mut probs = softmax(logits)?;
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    probs[label] -= 1.0;
    Ok((loss, probs))
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return (0.0, Vec::new());
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (loss, grad)
}

/// Face/non-face cross-entropy plus weighted landmark regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiTaskLoss {
    pub classification: f64,
    pub landmark: f64,
    pub lambda: f64,
}

impl MultiTaskLoss {
    pub const DEFAULT_LAMBDA: f64 = 1.0;

    pub fn total(&self) -> f64 {
        self.classification + self.lambda * self.landmark
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_are_uniform() {
        let p = softmax(&[0.3, 0.3, 0.3, 0.3]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_onehot() {
        let (loss, g) = softmax_cross_entropy(&[1.0, 2.0], 1).unwrap();
        let p1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((loss + p1.ln()).abs() < 1e-12);
        assert!((g[0] - (1.0 - p1)).abs() < 1e-12);
        assert!((g[1] - (p1 - 1.0)).abs() < 1e-12);
        assert!(softmax_cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn multitask_total() {
        let l = MultiTaskLoss { classification: 0.5, landmark: 0.25, lambda: 2.0 };
        assert_eq!(l.total(), 1.0);
    }
}

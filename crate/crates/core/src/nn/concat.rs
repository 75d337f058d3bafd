/// Joins two flattened feature vectors.
pub fn concat_features(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Splits the gradient of a concatenation back into its two parts.
pub fn concat_backward(grad: &[f64], len_a: usize) -> (Vec<f64>, Vec<f64>) {
    let (ga, gb) = grad.split_at(len_a);
    (ga.to_vec(), gb.to_vec())
}

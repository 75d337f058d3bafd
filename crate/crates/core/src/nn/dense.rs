//! Fully connected layer `y = W x + b` with `W` stored as `(out, in)`.

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef};

pub fn fully_connected(weights: &[f64], bias: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    let (n_out, n_in) = (bias.len(), input.len());
    if weights.len() != n_out * n_in {
        return Err(Error::shape(format!(
            "weights hold {} values, expected {n_out}x{n_in}",
            weights.len()
        )));
    }
    let mut out = bias.to_vec();
    gemm(
        MatRef::row_major(weights, n_out, n_in),
        MatRef::row_major(input, n_in, 1),
        1.0,
        &mut out,
    );
    Ok(out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn fully_connected_backward(
    weights: &[f64],
    input: &[f64],
    grad_out: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n_out, n_in) = (grad_out.len(), input.len());
    if weights.len() != n_out * n_in {
        return Err(Error::shape("fully connected backward: weight shape"));
    }
    let mut grad_w = vec![0.0; n_out * n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        if g != 0.0 {
            grad_w[o * n_in..(o + 1) * n_in]
                .iter_mut()
                .zip(input)
                .for_each(|(w, &x)| *w = g * x);
        }
    }
    let mut grad_in = vec![0.0; n_in];
    gemm(
        MatRef::row_major(weights, n_out, n_in).t(),
        MatRef::row_major(grad_out, n_out, 1),
        0.0,
        &mut grad_in,
    );
    Ok((grad_in, grad_w, grad_out.to_vec()))
}

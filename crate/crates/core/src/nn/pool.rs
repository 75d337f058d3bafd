use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output of a 2x2/2 max pool: pooled values and, for each output cell, the
/// flat input index that produced it.
#[derive(Debug, Clone)]
pub struct Pooled<T = f64> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

pub fn pooled_size(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(2), w.div_ceil(2))
}

/// Max over one 2x2 block. Odd trailing rows/columns are replicated, and ties
/// go to the first index in row-major scan order.
#[inline]
pub(crate) fn block_max<T: Scalar>(plane: &[T], base: usize, (h, w): (usize, usize), oy: usize, ox: usize) -> (T, usize) {
    let y0 = 2 * oy;
    let x0 = 2 * ox;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let mut best_idx = base + y0 * w + x0;
    let mut best = plane[y0 * w + x0];
    for (y, x) in [(y0, x1), (y1, x0), (y1, x1)] {
        let v = plane[y * w + x];
        if v > best {
            best = v;
            best_idx = base + y * w + x;
        }
    }
    (best, best_idx)
}

pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<Pooled<T>> {
    let (c, h, w) = input.chw()?;
    if h == 0 || w == 0 {
        return Err(Error::shape("max pool over an empty plane"));
    }
    let (ho, wo) = pooled_size(h, w);
    let mut output = Tensor::zeros(&[c, ho, wo]);
    let mut argmax = vec![0; c * ho * wo];
    let out = output.data_mut();
    for ci in 0..c {
        let base = ci * h * w;
        let plane = &input.data()[base..base + h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let (v, idx) = block_max(plane, base, (h, w), oy, ox);
                let o = (ci * ho + oy) * wo + ox;
                out[o] = v;
                argmax[o] = idx;
            }
        }
    }
    Ok(Pooled { output, argmax })
}

/// Routes each output gradient to the single input position that won the max.
pub fn maxpool_backward(grad_out: &Tensor<f64>, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor<f64>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(format!(
            "grad_out has {} values, argmax {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        if idx >= g.len() {
            return Err(Error::shape("argmax index outside input"));
        }
        g[idx] += v;
    }
    Ok(grad)
}

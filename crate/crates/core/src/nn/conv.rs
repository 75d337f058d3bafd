//! im2col convolution: gather receptive patches into a `(W*H) x (C*K^2)` data
//! matrix and multiply it with the `(C*K^2) x N` filter matrix.

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        let spec = ConvSpec { kernel, stride, padding, in_channels, out_channels };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Invalid(format!("degenerate conv spec {self:?}")));
        }
        Ok(())
    }

    /// Length of one gathered patch, `C * K^2`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn filter_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    /// Output `(height, width)` for an input of `(height, width)`.
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let ph = height + 2 * self.padding;
        let pw = width + 2 * self.padding;
        if ph < self.kernel || pw < self.kernel {
            return Err(Error::shape(format!(
                "input {height}x{width} with padding {} is smaller than kernel {}",
                self.padding, self.kernel
            )));
        }
        Ok(((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }

    /// Multiply-accumulate count of a dense evaluation over `positions` outputs.
    pub fn macs(&self, positions: usize) -> u64 {
        (positions * self.patch_len() * self.out_channels) as u64
    }

    fn check_input<T: Scalar>(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.chw()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "input has {c} channels, conv expects {}",
                self.in_channels
            )));
        }
        Ok((c, h, w))
    }

    fn check_filters<T: Scalar>(&self, filters: &Tensor<T>) -> Result<()> {
        if filters.shape() != self.filter_shape() {
            return Err(Error::shape(format!(
                "filters {:?}, expected {:?}",
                filters.shape(),
                self.filter_shape()
            )));
        }
        Ok(())
    }
}

/// Writes the patch whose top-left output position is `(oy, ox)` into `row`.
pub(crate) fn fill_patch<T: Scalar>(
    input: &[T],
    (h, w): (usize, usize),
    spec: &ConvSpec,
    oy: usize,
    ox: usize,
    row: &mut [T],
) {
    let k = spec.kernel;
    let y0 = (oy * spec.stride) as isize - spec.padding as isize;
    let x0 = (ox * spec.stride) as isize - spec.padding as isize;
    let interior_x = x0 >= 0 && x0 as usize + k <= w;
    let mut dst = 0;
    for c in 0..spec.in_channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            let y = y0 + ky as isize;
            let out = &mut row[dst..dst + k];
            dst += k;
            if y < 0 || y as usize >= h {
                out.fill(T::zero());
                continue;
            }
            let line = &plane[y as usize * w..(y as usize + 1) * w];
            if interior_x {
                out.copy_from_slice(&line[x0 as usize..x0 as usize + k]);
            } else {
                for (kx, v) in out.iter_mut().enumerate() {
                    let x = x0 + kx as isize;
                    *v = if x < 0 || x as usize >= w { T::zero() } else { line[x as usize] };
                }
            }
        }
    }
}

/// Gathers every receptive patch into a `(Ho*Wo) x (C*K^2)` matrix.
pub fn im2col<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    let (_, h, w) = spec.check_input(input)?;
    let (ho, wo) = spec.output_size(h, w)?;
    let cols = spec.patch_len();
    let mut out = Tensor::zeros(&[ho * wo, cols]);
    let data = out.data_mut();
    for oy in 0..ho {
        for ox in 0..wo {
            let r = oy * wo + ox;
            fill_patch(input.data(), (h, w), spec, oy, ox, &mut data[r * cols..(r + 1) * cols]);
        }
    }
    Ok(out)
}

/// Scatter-adds a column matrix back onto an input-shaped gradient.
fn col2im(cols: &[f64], (c, h, w): (usize, usize, usize), spec: &ConvSpec) -> Tensor<f64> {
    let (ho, wo) = spec.output_size(h, w).expect("checked by caller");
    let k = spec.kernel;
    let plen = spec.patch_len();
    let mut grad = Tensor::zeros(&[c, h, w]);
    let g = grad.data_mut();
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &cols[(oy * wo + ox) * plen..(oy * wo + ox + 1) * plen];
            let y0 = (oy * spec.stride) as isize - spec.padding as isize;
            let x0 = (ox * spec.stride) as isize - spec.padding as isize;
            let mut src = 0;
            for ci in 0..c {
                for ky in 0..k {
                    let y = y0 + ky as isize;
                    if y < 0 || y as usize >= h {
                        src += k;
                        continue;
                    }
                    let base = (ci * h + y as usize) * w;
                    for kx in 0..k {
                        let x = x0 + kx as isize;
                        if x >= 0 && (x as usize) < w {
                            g[base + x as usize] += row[src];
                        }
                        src += 1;
                    }
                }
            }
        }
    }
    grad
}

/// Dense convolution as `O^T = F * D^T`, written straight into `(N, Ho, Wo)`.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, filters: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    spec.check_filters(filters)?;
    let (_, h, w) = spec.check_input(input)?;
    let (ho, wo) = spec.output_size(h, w)?;
    let cols = im2col(input, spec)?;
    let mut out = Tensor::zeros(&[spec.out_channels, ho, wo]);
    let f = MatRef::row_major(filters.data(), spec.out_channels, spec.patch_len());
    let d = MatRef::row_major(cols.data(), ho * wo, spec.patch_len());
    gemm(f, d.t(), T::zero(), out.data_mut());
    Ok(out)
}

/// Gradients of a bias-free convolution with respect to its input and filters.
pub fn conv2d_backward(
    grad_out: &Tensor<f64>,
    input: &Tensor<f64>,
    filters: &Tensor<f64>,
    spec: &ConvSpec,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    spec.check_filters(filters)?;
    let (_, h, w) = spec.check_input(input)?;
    let (ho, wo) = spec.output_size(h, w)?;
    if grad_out.shape() != [spec.out_channels, ho, wo] {
        return Err(Error::shape(format!(
            "grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [spec.out_channels, ho, wo]
        )));
    }
    let cols = im2col(input, spec)?;
    Ok(backward_from_cols(grad_out, &cols, input.chw()?, filters, spec))
}

pub(crate) fn backward_from_cols(
    grad_out: &Tensor<f64>,
    cols: &Tensor<f64>,
    input_chw: (usize, usize, usize),
    filters: &Tensor<f64>,
    spec: &ConvSpec,
) -> (Tensor<f64>, Tensor<f64>) {
    let plen = spec.patch_len();
    let n = spec.out_channels;
    let positions = cols.shape()[0];
    let g = MatRef::row_major(grad_out.data(), n, positions);
    let d = MatRef::row_major(cols.data(), positions, plen);
    let f = MatRef::row_major(filters.data(), n, plen);

    let mut grad_filters = Tensor::zeros(&spec.filter_shape());
    gemm(g, d, 0.0, grad_filters.data_mut());

    let mut grad_cols = vec![0.0; positions * plen];
    gemm(g.t(), f, 0.0, &mut grad_cols);
    (col2im(&grad_cols, input_chw, spec), grad_filters)
}

//! Masked convolution: only patches whose output position is set in the mask
//! are gathered, giving an `M x C*K^2` data matrix and `M*C*K^2*N` MACs.

use super::mask::RoiMask;
use crate::error::{Error, Result};
use crate::nn::conv::{fill_patch, ConvSpec};
use crate::nn::pool::{block_max, pooled_size};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct RoiConvOutput<T = f64> {
    /// `(N, Ho, Wo)`, exactly zero wherever the mask is clear.
    pub output: Tensor<T>,
    pub macs: u64,
}

fn check_mask<T: Scalar>(input: &Tensor<T>, mask: &RoiMask, spec: &ConvSpec) -> Result<(usize, usize, usize, usize)> {
    let (c, h, w) = input.chw()?;
    if c != spec.in_channels {
        return Err(Error::shape(format!("input has {c} channels, conv expects {}", spec.in_channels)));
    }
    let (ho, wo) = spec.output_size(h, w)?;
    if (mask.width(), mask.height()) != (wo, ho) {
        return Err(Error::shape(format!(
            "mask is {}x{}, convolution output is {wo}x{ho}",
            mask.width(),
            mask.height()
        )));
    }
    Ok((h, w, ho, wo))
}

/// Gathers the patches of masked output positions. Returns the data matrix
/// and the flat output index of each row, in row-major order.
pub fn roi_im2col<T: Scalar>(input: &Tensor<T>, mask: &RoiMask, spec: &ConvSpec) -> Result<(Tensor<T>, Vec<usize>)> {
    spec.validate()?;
    let (h, w, _, wo) = check_mask(input, mask, spec)?;
    let positions = mask.positions();
    let plen = spec.patch_len();
    let mut d = Tensor::zeros(&[positions.len(), plen]);
    for (row, &pos) in d.data_mut().chunks_mut(plen).zip(&positions) {
        fill_patch(input.data(), (h, w), spec, pos / wo, pos % wo, row);
    }
    Ok((d, positions))
}

pub fn roi_conv_forward<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    mask: &RoiMask,
    spec: &ConvSpec,
) -> Result<RoiConvOutput<T>> {
    roi_conv_forward_with_bias(input, filters, None, mask, spec)
}

/// As [`roi_conv_forward`], adding a per-channel bias at masked positions only.
pub fn roi_conv_forward_with_bias<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: Option<&[T]>,
    mask: &RoiMask,
    spec: &ConvSpec,
) -> Result<RoiConvOutput<T>> {
    if filters.shape() != spec.filter_shape() {
        return Err(Error::shape(format!("filters {:?}, expected {:?}", filters.shape(), spec.filter_shape())));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::shape("bias length"));
        }
    }
    let (_, _, ho, wo) = check_mask(input, mask, spec)?;
    let (d, positions) = roi_im2col(input, mask, spec)?;
    let m = positions.len();
    let n = spec.out_channels;
    let plen = spec.patch_len();
    let mut output = Tensor::zeros(&[n, ho, wo]);
    if m == 0 {
        return Ok(RoiConvOutput { output, macs: 0 });
    }
    // O'^T = F * D'^T, an N x M block.
    let mut block = vec![T::zero(); n * m];
    if let Some(b) = bias {
        for (row, &bv) in block.chunks_mut(m).zip(b) {
            row.fill(bv);
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    gemm(
        MatRef::row_major(filters.data(), n, plen),
        MatRef::row_major(d.data(), m, plen).t(),
        beta,
        &mut block,
    );
    let out = output.data_mut();
    for (ch, row) in block.chunks(m).enumerate() {
        let plane = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for (&pos, &v) in positions.iter().zip(row) {
            plane[pos] = v;
        }
    }
    Ok(RoiConvOutput { output, macs: spec.macs(m) })
}

/// 2x2/2 max pool evaluated only where `out_mask` is set; zero elsewhere.
pub fn roi_maxpool2x2<T: Scalar>(input: &Tensor<T>, out_mask: &RoiMask) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw()?;
    let (ho, wo) = pooled_size(h, w);
    if (out_mask.width(), out_mask.height()) != (wo, ho) {
        return Err(Error::shape("pool mask extents"));
    }
    let positions = out_mask.positions();
    let mut out = Tensor::zeros(&[c, ho, wo]);
    let o = out.data_mut();
    for ci in 0..c {
        let base = ci * h * w;
        let plane = &input.data()[base..base + h * w];
        for &pos in &positions {
            o[ci * ho * wo + pos] = block_max(plane, base, (h, w), pos / wo, pos % wo).0;
        }
    }
    Ok(out)
}

//! Parameterised layers. A layer value doubles as its own gradient buffer:
//! [`Layer::zeros_like`] gives an accumulator with identical shapes.

use rand::Rng;

use super::conv::{backward_from_cols, im2col, ConvSpec};
use super::dense::{fully_connected, fully_connected_backward};
use super::init::glorot_uniform;
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Tensor};

pub trait Layer {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self;

    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    fn scale(&mut self, factor: f64) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub spec: ConvSpec,
    pub weight: Tensor<f64>,
    pub bias: Vec<f64>,
}

/// Saved forward state for [`Conv2d::backward`].
#[derive(Debug, Clone)]
pub struct ConvCache {
    input_chw: (usize, usize, usize),
    cols: Tensor<f64>,
}

impl Conv2d {
    pub fn new<R: Rng>(spec: ConvSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let fan_in = spec.patch_len();
        let fan_out = spec.out_channels * spec.kernel * spec.kernel;
        let weight = Tensor::from_vec(
            &spec.filter_shape(),
            glorot_uniform(rng, spec.out_channels * fan_in, fan_in, fan_out),
        )?;
        Ok(Conv2d { spec, weight, bias: vec![0.0; spec.out_channels] })
    }

    pub fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Tensor<f64>) -> Result<(Tensor<f64>, ConvCache)> {
        let (c, h, w) = input.chw()?;
        let (ho, wo) = self.spec.output_size(h, w)?;
        let cols = im2col(input, &self.spec)?;
        let plen = self.spec.patch_len();
        let n = self.spec.out_channels;
        let mut out = Tensor::zeros(&[n, ho, wo]);
        let hw = ho * wo;
        for (o, b) in out.data_mut().chunks_mut(hw).zip(&self.bias) {
            o.fill(*b);
        }
        gemm(
            MatRef::row_major(self.weight.data(), n, plen),
            MatRef::row_major(cols.data(), hw, plen).t(),
            1.0,
            out.data_mut(),
        );
        Ok((out, ConvCache { input_chw: (c, h, w), cols }))
    }

    /// Returns the input gradient and the parameter gradient.
    pub fn backward(&self, cache: &ConvCache, grad_out: &Tensor<f64>) -> Result<(Tensor<f64>, Conv2d)> {
        let (_, h, w) = cache.input_chw;
        let (ho, wo) = self.spec.output_size(h, w)?;
        if grad_out.shape() != [self.spec.out_channels, ho, wo] {
            return Err(Error::shape(format!("conv grad_out {:?}", grad_out.shape())));
        }
        let (gi, gw) = backward_from_cols(grad_out, &cache.cols, cache.input_chw, &self.weight, &self.spec);
        let bias = grad_out.data().chunks(ho * wo).map(|c| c.iter().sum()).collect();
        Ok((gi, Conv2d { spec: self.spec, weight: gw, bias }))
    }
}

impl Layer for Conv2d {
    fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.data(), &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.data_mut(), &mut self.bias]
    }
    fn zeros_like(&self) -> Self {
        Conv2d {
            spec: self.spec,
            weight: Tensor::zeros(self.weight.shape()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Dense {
            n_in,
            n_out,
            weight: glorot_uniform(rng, n_in * n_out, n_in, n_out),
            bias: vec![0.0; n_out],
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.n_in {
            return Err(Error::shape(format!("dense expects {} inputs, got {}", self.n_in, input.len())));
        }
        fully_connected(&self.weight, &self.bias, input)
    }

    pub fn backward(&self, input: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, Dense)> {
        let (gi, gw, gb) = fully_connected_backward(&self.weight, input, grad_out)?;
        Ok((gi, Dense { n_in: self.n_in, n_out: self.n_out, weight: gw, bias: gb }))
    }
}

impl Layer for Dense {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
    fn zeros_like(&self) -> Self {
        Dense {
            n_in: self.n_in,
            n_out: self.n_out,
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

//! Verification network over 64x64 rectified crops.

use rand::Rng;

use stnface_core::nn::{maxpool2x2, maxpool_backward, relu, relu_backward, Conv2d, ConvCache, ConvSpec, Dense, Layer, Pooled};
use stnface_core::stn::RECTIFIED_SIZE;
use stnface_core::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Rcnn {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
    pub fc: Dense,
}

pub struct RcnnCache {
    c1: ConvCache,
    z1: Tensor<f64>,
    c2: ConvCache,
    z2: Tensor<f64>,
    p2: Pooled<f64>,
    c3: ConvCache,
    z3: Tensor<f64>,
    p3: Pooled<f64>,
    fc_in: Vec<f64>,
    fc_out: Vec<f64>,
}

impl Rcnn {
    pub fn new<R: Rng>(channels: [usize; 3], features: usize, rng: &mut R) -> Result<Self> {
        let [c1, c2, c3] = channels;
        let side = RECTIFIED_SIZE / 8;
        Ok(Rcnn {
            conv1: Conv2d::new(ConvSpec::new(1, c1, 5, 2, 2)?, rng)?,
            conv2: Conv2d::new(ConvSpec::new(c1, c2, 3, 1, 1)?, rng)?,
            conv3: Conv2d::new(ConvSpec::new(c2, c3, 3, 1, 1)?, rng)?,
            fc: Dense::new(c3 * side * side, features, rng),
        })
    }

    pub fn feature_len(&self) -> usize {
        self.fc.n_out
    }

    pub fn forward(&self, crop: &Tensor<f64>) -> Result<Vec<f64>> {
        Ok(self.forward_cached(crop)?.0)
    }

    pub fn forward_cached(&self, crop: &Tensor<f64>) -> Result<(Vec<f64>, RcnnCache)> {
        let (z1, c1) = self.conv1.forward_cached(crop)?;
        let (z2, c2) = self.conv2.forward_cached(&relu(&z1))?;
        let p2 = maxpool2x2(&relu(&z2))?;
        let (z3, c3) = self.conv3.forward_cached(&p2.output)?;
        let p3 = maxpool2x2(&relu(&z3))?;
        let fc_in = p3.output.data().to_vec();
        if fc_in.len() != self.fc.n_in {
            return Err(Error::shape(format!("crop gives {} features, fc expects {}", fc_in.len(), self.fc.n_in)));
        }
        let fc_out = self.fc.forward(&fc_in)?;
        let features: Vec<f64> = fc_out.iter().map(|&v| v.max(0.0)).collect();
        Ok((features, RcnnCache { c1, z1, c2, z2, p2, c3, z3, p3, fc_in, fc_out }))
    }

    /// Returns the crop gradient and the parameter gradients.
    pub fn backward(&self, cache: &RcnnCache, d_features: &[f64]) -> Result<(Tensor<f64>, Rcnn)> {
        let d_fc: Vec<f64> = d_features.iter().zip(&cache.fc_out).map(|(&g, &z)| if z > 0.0 { g } else { 0.0 }).collect();
        let (d_in, g_fc) = self.fc.backward(&cache.fc_in, &d_fc)?;
        let d_p3 = Tensor::from_vec(cache.p3.output.shape(), d_in)?;
        let d_a3 = maxpool_backward(&d_p3, &cache.p3.argmax, cache.z3.shape())?;
        let (d_p2, g3) = self.conv3.backward(&cache.c3, &relu_backward(&d_a3, &cache.z3))?;
        let d_a2 = maxpool_backward(&d_p2, &cache.p2.argmax, cache.z2.shape())?;
        let (d_a1, g2) = self.conv2.backward(&cache.c2, &relu_backward(&d_a2, &cache.z2))?;
        let (d_crop, g1) = self.conv1.backward(&cache.c1, &relu_backward(&d_a1, &cache.z1))?;
        Ok((d_crop, Rcnn { conv1: g1, conv2: g2, conv3: g3, fc: g_fc }))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p: Vec<&[f64]> = [&self.conv1, &self.conv2, &self.conv3].into_iter().flat_map(|c| c.params()).collect();
        p.extend(self.fc.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> =
            [&mut self.conv1, &mut self.conv2, &mut self.conv3].into_iter().flat_map(|c| c.params_mut()).collect();
        p.extend(self.fc.params_mut());
        p
    }

    pub fn zeros_like(&self) -> Rcnn {
        Rcnn {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            conv3: self.conv3.zeros_like(),
            fc: self.fc.zeros_like(),
        }
    }

    pub fn accumulate(&mut self, g: &Rcnn) {
        self.conv1.accumulate(&g.conv1);
        self.conv2.accumulate(&g.conv2);
        self.conv3.accumulate(&g.conv3);
        self.fc.accumulate(&g.fc);
    }
}

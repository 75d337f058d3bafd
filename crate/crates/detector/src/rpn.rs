//! Proposal network: three 7x7 convolutions with two 2x2 pools, then a 1x1
//! head. One output cell per 8 input pixels with an 85 px receptive field,
//! enough context for the 72 px top of an octave.
//!
//! Head channels: two face/background logits, then either ten landmark
//! offsets or a box `(dx, dy, ln(s / LANDMARK_REF))`. Offsets are measured
//! from the cell centre in units of [`LANDMARK_REF`] pixels.

use rand::Rng;

use stnface_core::image::GrayImage;
use stnface_core::nn::{maxpool2x2, maxpool_backward, relu, relu_backward, softmax, Conv2d, ConvCache, ConvSpec, Layer, Pooled};
use stnface_core::roi::{receptive_field, roi_conv_forward_with_bias, roi_maxpool2x2, LayerRfSpec, RoiMask};
use stnface_core::stn::{estimate_similarity, CanonicalShape, LandmarkSet, Point};
use stnface_core::{BBox, Error, Result, Tensor};

use crate::synth::LAYOUT;

pub const STRIDE: usize = 8;
/// Input coordinate of the centre of output cell 0.
pub const CELL_OFFSET: f64 = 3.0;
pub const LANDMARK_REF: f64 = 54.0;
pub const KERNEL: usize = 7;

pub fn cell_center(col: usize, row: usize) -> Point {
    [(STRIDE * col) as f64 + CELL_OFFSET, (STRIDE * row) as f64 + CELL_OFFSET]
}

/// Network input: pixels mapped to `[-0.5, 0.5]`.
pub fn image_input(img: &GrayImage) -> Tensor<f64> {
    Tensor::from_vec(&[1, img.height(), img.width()], img.data().iter().map(|&v| v as f64 / 255.0 - 0.5).collect())
        .expect("extent matches")
}

pub fn rf_layers() -> Vec<LayerRfSpec> {
    vec![
        LayerRfSpec::conv(KERNEL, 2),
        LayerRfSpec::pool(2, 2),
        LayerRfSpec::conv(KERNEL, 1),
        LayerRfSpec::pool(2, 2),
        LayerRfSpec::conv(KERNEL, 1),
    ]
}

pub fn receptive_field_size() -> usize {
    receptive_field(&rf_layers()).expect("static stack")[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rpn {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
    pub head: Conv2d,
    pub landmarks: bool,
}

pub struct RpnCache {
    c1: ConvCache,
    a1: Tensor<f64>,
    p1: Pooled<f64>,
    c2: ConvCache,
    a2: Tensor<f64>,
    p2: Pooled<f64>,
    c3: ConvCache,
    a3: Tensor<f64>,
    ch: ConvCache,
}

/// Dense or masked forward output.
#[derive(Debug, Clone)]
pub struct RpnMaps {
    /// Last shared feature map after ReLU, `(c3, h, w)`.
    pub features: Tensor<f64>,
    pub head: Tensor<f64>,
}

/// One decoded proposal at a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPrediction {
    pub col: usize,
    pub row: usize,
    pub score: f64,
    pub bbox: BBox,
    /// Absent for the box head.
    pub landmarks: Option<[Point; 5]>,
}

impl Rpn {
    pub fn new<R: Rng>(channels: [usize; 3], landmarks: bool, rng: &mut R) -> Result<Self> {
        let [c1, c2, c3] = channels;
        let outputs = if landmarks { 12 } else { 5 };
        Ok(Rpn {
            conv1: Conv2d::new(ConvSpec::new(1, c1, KERNEL, 2, 3)?, rng)?,
            conv2: Conv2d::new(ConvSpec::new(c1, c2, KERNEL, 1, 3)?, rng)?,
            conv3: Conv2d::new(ConvSpec::new(c2, c3, KERNEL, 1, 3)?, rng)?,
            head: Conv2d::new(ConvSpec::new(c3, outputs, 1, 1, 0)?, rng)?,
            landmarks,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.conv3.spec.out_channels
    }

    pub fn head_outputs(&self) -> usize {
        self.head.spec.out_channels
    }

    pub fn forward(&self, input: &Tensor<f64>) -> Result<RpnMaps> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Tensor<f64>) -> Result<(RpnMaps, RpnCache)> {
        let (z1, c1) = self.conv1.forward_cached(input)?;
        let a1 = relu(&z1);
        let p1 = maxpool2x2(&a1)?;
        let (z2, c2) = self.conv2.forward_cached(&p1.output)?;
        let a2 = relu(&z2);
        let p2 = maxpool2x2(&a2)?;
        let (z3, c3) = self.conv3.forward_cached(&p2.output)?;
        let a3 = relu(&z3);
        let (head, ch) = self.head.forward_cached(&a3)?;
        let maps = RpnMaps { features: a3.clone(), head };
        Ok((maps, RpnCache { c1, a1: z1, p1, c2, a2: z2, p2, c3, a3: z3, ch }))
    }

    /// Backpropagates head and feature-map gradients into a gradient-shaped
    /// copy of the network.
    pub fn backward(&self, cache: &RpnCache, d_head: &Tensor<f64>, d_features: Option<&Tensor<f64>>) -> Result<Rpn> {
        let (mut d_a3, g_head) = self.head.backward(&cache.ch, d_head)?;
        if let Some(df) = d_features {
            if df.shape() != d_a3.shape() {
                return Err(Error::shape("feature gradient extent"));
            }
            d_a3.add_assign(df);
        }
        let d_z3 = relu_backward(&d_a3, &cache.a3);
        let (d_p2, g3) = self.conv3.backward(&cache.c3, &d_z3)?;
        let d_a2 = maxpool_backward(&d_p2, &cache.p2.argmax, cache.a2.shape())?;
        let d_z2 = relu_backward(&d_a2, &cache.a2);
        let (d_p1, g2) = self.conv2.backward(&cache.c2, &d_z2)?;
        let d_a1 = maxpool_backward(&d_p1, &cache.p1.argmax, cache.a1.shape())?;
        let d_z1 = relu_backward(&d_a1, &cache.a1);
        let (_, g1) = self.conv1.backward(&cache.c1, &d_z1)?;
        Ok(Rpn { conv1: g1, conv2: g2, conv3: g3, head: g_head, landmarks: self.landmarks })
    }

    /// Masked forward: every layer runs only inside its propagated mask.
    /// Returns the maps (zero outside the mask) and the output-cell mask.
    pub fn forward_roi(&self, input: &Tensor<f64>, level_mask: &RoiMask) -> Result<(RpnMaps, RoiMask, u64)> {
        let m1 = level_mask.downsample();
        let m2 = m1.downsample();
        let m3 = m2.downsample();
        let conv = |x: &Tensor<f64>, c: &Conv2d, m: &RoiMask| {
            roi_conv_forward_with_bias(x, &c.weight, Some(&c.bias), m, &c.spec)
        };
        let o1 = conv(input, &self.conv1, &m1)?;
        let p1 = roi_maxpool2x2(&relu(&o1.output), &m2)?;
        let o2 = conv(&p1, &self.conv2, &m2)?;
        let p2 = roi_maxpool2x2(&relu(&o2.output), &m3)?;
        let o3 = conv(&p2, &self.conv3, &m3)?;
        let features = relu(&o3.output);
        let oh = conv(&features, &self.head, &m3)?;
        let macs = o1.macs + o2.macs + o3.macs + oh.macs;
        Ok((RpnMaps { features, head: oh.output }, m3, macs))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        [&self.conv1, &self.conv2, &self.conv3, &self.head].into_iter().flat_map(|c| c.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        [&mut self.conv1, &mut self.conv2, &mut self.conv3, &mut self.head]
            .into_iter()
            .flat_map(|c| c.params_mut())
            .collect()
    }

    pub fn zeros_like(&self) -> Rpn {
        Rpn {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            conv3: self.conv3.zeros_like(),
            head: self.head.zeros_like(),
            landmarks: self.landmarks,
        }
    }

    pub fn accumulate(&mut self, g: &Rpn) {
        self.conv1.accumulate(&g.conv1);
        self.conv2.accumulate(&g.conv2);
        self.conv3.accumulate(&g.conv3);
        self.head.accumulate(&g.head);
    }
}

pub fn head_at(maps: &RpnMaps, col: usize, row: usize) -> Vec<f64> {
    let (c, h, w) = maps.head.chw().expect("3-d head");
    (0..c).map(|k| maps.head.data()[(k * h + row) * w + col]).collect()
}

pub fn features_at(maps: &RpnMaps, col: usize, row: usize) -> Vec<f64> {
    let (c, h, w) = maps.features.chw().expect("3-d features");
    (0..c).map(|k| maps.features.data()[(k * h + row) * w + col]).collect()
}

/// Face box implied by five landmarks: the similarity onto the unit layout
/// gives the centre and the side.
pub fn box_from_landmarks(points: &[Point; 5]) -> Option<BBox> {
    let canonical = CanonicalShape::new(LAYOUT.to_vec(), false).ok()?;
    let lm = LandmarkSet::new(points.to_vec()).ok()?;
    let t = estimate_similarity(&lm, &canonical).ok()?;
    let c = t.inverse([0.0, 0.0]);
    let s = t.source_scale();
    (s.is_finite() && s > 0.0).then(|| BBox::from_center(c[0], c[1], s, s))
}

/// Decodes a head vector at a cell. `None` when the landmarks are degenerate.
pub fn decode(head: &[f64], col: usize, row: usize) -> Option<CellPrediction> {
    let score = softmax(&head[..2]).ok()?[1];
    let [cx, cy] = cell_center(col, row);
    if head.len() == 12 {
        let lm: [Point; 5] = std::array::from_fn(|k| [cx + LANDMARK_REF * head[2 + 2 * k], cy + LANDMARK_REF * head[3 + 2 * k]]);
        let bbox = box_from_landmarks(&lm)?;
        Some(CellPrediction { col, row, score, bbox, landmarks: Some(lm) })
    } else {
        let s = LANDMARK_REF * head[4].clamp(-5.0, 5.0).exp();
        let bbox = BBox::from_center(cx + LANDMARK_REF * head[2], cy + LANDMARK_REF * head[3], s, s);
        Some(CellPrediction { col, row, score, bbox, landmarks: None })
    }
}

/// Regression target at a cell for a face with the given box and landmarks.
pub fn regression_target(landmarks: bool, bbox: &BBox, points: &[Point; 5], col: usize, row: usize) -> Vec<f64> {
    let [cx, cy] = cell_center(col, row);
    if landmarks {
        points.iter().flat_map(|p| [(p[0] - cx) / LANDMARK_REF, (p[1] - cy) / LANDMARK_REF]).collect()
    } else {
        let (fx, fy) = bbox.center();
        vec![(fx - cx) / LANDMARK_REF, (fy - cy) / LANDMARK_REF, (bbox.size() / LANDMARK_REF).ln()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn geometry() {
        assert_eq!(receptive_field_size(), 85);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rpn = Rpn::new([2, 3, 4], true, &mut rng).unwrap();
        let maps = rpn.forward(&Tensor::zeros(&[1, 96, 80])).unwrap();
        assert_eq!(maps.head.shape(), &[12, 12, 10]);
        assert_eq!(maps.features.shape(), &[4, 12, 10]);
    }

    #[test]
    fn decode_round_trips_targets() {
        let lm = crate::synth::face_landmarks([40.0, 37.0], 50.0, 0.3);
        let bbox = BBox::from_center(40.0, 37.0, 50.0, 50.0);
        let mut head = vec![0.0, 1.0];
        head.extend(regression_target(true, &bbox, &lm, 4, 4));
        let p = decode(&head, 4, 4).unwrap();
        assert!(p.bbox.iou(&bbox) > 0.999);
        let mut head = vec![0.0, 1.0];
        head.extend(regression_target(false, &bbox, &lm, 4, 4));
        assert!(decode(&head, 4, 4).unwrap().bbox.iou(&bbox) > 0.999);
    }

    #[test]
    fn full_mask_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rpn = Rpn::new([3, 4, 4], true, &mut rng).unwrap();
        let input = Tensor::from_fn(&[1, 40, 48], |i| ((i * 37) % 23) as f64 / 23.0 - 0.5);
        let dense = rpn.forward(&input).unwrap();
        let (roi, m3, _) = rpn.forward_roi(&input, &RoiMask::full(48, 40)).unwrap();
        assert_eq!(m3.count(), 30);
        assert!(roi.head.max_abs_diff(&dense.head) < 1e-12);
        assert!(roi.features.max_abs_diff(&dense.features) < 1e-12);
    }
}

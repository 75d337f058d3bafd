//! The supervised transformer layer.
//!
//! A candidate's predicted landmarks `(x_i, y_i)` and a learnable canonical
//! shape `(x̄_i, ȳ_i)` define a two-parameter similarity
//!
//! ```text
//! [x̄ - m_x̄]   [ a  b] [x - m_x]
//! [ȳ - m_ȳ] = [-b  a] [y - m_y]
//! ```
//!
//! fitted in closed form by least squares. The rectified image is sampled by
//! mapping every rectified pixel back into the source with the inverse of that
//! matrix and interpolating bilinearly. Gradients flow to `a`, `b`, both
//! centroids, the source pixels, and from there to every landmark and
//! canonical coordinate.
//!
//! Conventions: pixel centres sit on integer coordinates, `x` is the column
//! and `y` the row, and the rectified frame is the canonical one.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type Point = [f64; 2];

/// Default rectified crop size (square).
pub const RECTIFIED_SIZE: usize = 64;

/// Singular-configuration threshold relative to the canonical spread.
pub const SINGULAR_RATIO: f64 = 1e-12;

fn mean(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    [sx / n, sy / n]
}

fn spread(points: &[Point]) -> f64 {
    let m = mean(points);
    points.iter().map(|p| (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sum()
}

/// Detected landmarks in source-image pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid(format!("need at least 2 landmarks, got {}", points.len())));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("landmark coordinates".into()));
        }
        Ok(LandmarkSet { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        mean(&self.points)
    }

    pub fn scaled(&self, factor: f64) -> LandmarkSet {
        LandmarkSet { points: self.points.iter().map(|p| [p[0] * factor, p[1] * factor]).collect() }
    }
}

/// Canonical landmark positions in rectified-image pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalShape {
    points: Vec<Point>,
    pub trainable: bool,
}

impl CanonicalShape {
    pub fn new(points: Vec<Point>, trainable: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid(format!("need at least 2 canonical points, got {}", points.len())));
        }
        Ok(CanonicalShape { points, trainable })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        mean(&self.points)
    }

    /// Keeps every point inside `[2, size - 3]` of a `size x size` crop.
    pub fn clamp_to(&mut self, size: usize) {
        let hi = size as f64 - 3.0;
        for p in &mut self.points {
            p[0] = p[0].clamp(2.0, hi);
            p[1] = p[1].clamp(2.0, hi);
        }
    }

    /// Root-mean-square point distance to another shape of the same length.
    pub fn rms_distance(&self, other: &CanonicalShape) -> f64 {
        assert_eq!(self.len(), other.len());
        let ss: f64 = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
            .sum();
        (ss / self.len() as f64).sqrt()
    }
}

/// Similarity `(a, b)` about the landmark centroid `src_mean` and the
/// canonical centroid `dst_mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub a: f64,
    pub b: f64,
    pub src_mean: Point,
    pub dst_mean: Point,
}

impl SimilarityTransform {
    pub fn new(a: f64, b: f64, src_mean: Point, dst_mean: Point) -> Result<Self> {
        if !(a * a + b * b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Invalid(format!("non-invertible similarity a={a}, b={b}")));
        }
        Ok(SimilarityTransform { a, b, src_mean, dst_mean })
    }

    /// Source point to rectified point.
    pub fn forward(&self, p: Point) -> Point {
        let dx = p[0] - self.src_mean[0];
        let dy = p[1] - self.src_mean[1];
        [
            self.a * dx + self.b * dy + self.dst_mean[0],
            -self.b * dx + self.a * dy + self.dst_mean[1],
        ]
    }

    /// Rectified point to source point.
    pub fn inverse(&self, q: Point) -> Point {
        let d = self.a * self.a + self.b * self.b;
        let u = q[0] - self.dst_mean[0];
        let v = q[1] - self.dst_mean[1];
        [
            (self.a * u - self.b * v) / d + self.src_mean[0],
            (self.b * u + self.a * v) / d + self.src_mean[1],
        ]
    }

    /// Source pixels per rectified pixel.
    pub fn source_scale(&self) -> f64 {
        1.0 / (self.a * self.a + self.b * self.b).sqrt()
    }
}

/// The three least-squares sums; `a = c1 / c3`, `b = c2 / c3`.
fn lsq_sums(landmarks: &[Point], canonical: &[Point]) -> (f64, f64, f64, Point, Point) {
    let m = mean(landmarks);
    let mb = mean(canonical);
    let (mut c1, mut c2, mut c3) = (0.0, 0.0, 0.0);
    for (p, q) in landmarks.iter().zip(canonical) {
        let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
        let (dxb, dyb) = (q[0] - mb[0], q[1] - mb[1]);
        c1 += dxb * dx + dyb * dy;
        c2 += dxb * dy - dyb * dx;
        c3 += dx * dx + dy * dy;
    }
    (c1, c2, c3, m, mb)
}

fn singular_threshold(canonical: &[Point]) -> f64 {
    SINGULAR_RATIO * spread(canonical).max(1.0)
}

fn check_pair(landmarks: &LandmarkSet, canonical: &CanonicalShape) -> Result<()> {
    if landmarks.len() != canonical.len() {
        return Err(Error::shape(format!(
            "{} landmarks vs {} canonical points",
            landmarks.len(),
            canonical.len()
        )));
    }
    Ok(())
}

/// Closed-form least-squares similarity mapping `landmarks` onto `canonical`.
pub fn estimate_similarity(landmarks: &LandmarkSet, canonical: &CanonicalShape) -> Result<SimilarityTransform> {
    check_pair(landmarks, canonical)?;
    let (c1, c2, c3, m, mb) = lsq_sums(&landmarks.points, &canonical.points);
    let threshold = singular_threshold(&canonical.points);
    if !(c3 > threshold) {
        return Err(Error::Singular { c3, threshold });
    }
    SimilarityTransform::new(c1 / c3, c2 / c3, m, mb)
}

pub fn inverse_map(t: &SimilarityTransform, p_rect: Point) -> Point {
    t.inverse(p_rect)
}

/// Bilinear taps around a source point. Out-of-bounds taps carry weight but
/// read as zero.
#[derive(Debug, Clone, Copy)]
struct Taps {
    xl: isize,
    yt: isize,
    bx: f64,
    by: f64,
}

impl Taps {
    fn at(p: Point) -> Taps {
        let xl = p[0].floor();
        let yt = p[1].floor();
        Taps { xl: xl as isize, yt: yt as isize, bx: p[0] - xl, by: p[1] - yt }
    }

    /// `(x, y, weight)` for tl, tr, bl, br.
    fn corners(&self) -> [(isize, isize, f64); 4] {
        let (bx, by) = (self.bx, self.by);
        [
            (self.xl, self.yt, (1.0 - bx) * (1.0 - by)),
            (self.xl + 1, self.yt, bx * (1.0 - by)),
            (self.xl, self.yt + 1, (1.0 - bx) * by),
            (self.xl + 1, self.yt + 1, bx * by),
        ]
    }
}

#[inline]
fn pixel(plane: &[f64], (h, w): (usize, usize), x: isize, y: isize) -> f64 {
    if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
        0.0
    } else {
        plane[y as usize * w + x as usize]
    }
}

/// Samples one source plane at a real-valued point, zero outside.
pub fn bilinear_sample(plane: &[f64], hw: (usize, usize), p: Point) -> f64 {
    Taps::at(p).corners().iter().map(|&(x, y, wgt)| wgt * pixel(plane, hw, x, y)).sum()
}

/// Horizontal and vertical image gradients of the bilinear surface.
fn image_gradient(plane: &[f64], hw: (usize, usize), t: &Taps) -> (f64, f64) {
    let (xl, xr, yt, yb) = (t.xl, t.xl + 1, t.yt, t.yt + 1);
    let tl = pixel(plane, hw, xl, yt);
    let tr = pixel(plane, hw, xr, yt);
    let bl = pixel(plane, hw, xl, yb);
    let br = pixel(plane, hw, xr, yb);
    let ix = t.by * (br - bl) + (1.0 - t.by) * (tr - tl);
    let iy = t.bx * (br - tr) + (1.0 - t.bx) * (bl - tl);
    (ix, iy)
}

/// Rectifies `source` (CHW) onto an `(height, width)` grid.
pub fn warp(source: &Tensor<f64>, t: &SimilarityTransform, out_size: (usize, usize)) -> Result<Tensor<f64>> {
    let (c, h, w) = source.chw()?;
    let (oh, ow) = out_size;
    if oh == 0 || ow == 0 {
        return Err(Error::Invalid("warp output size must be positive".into()));
    }
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let src = source.data();
    let dst = out.data_mut();
    for yb in 0..oh {
        for xb in 0..ow {
            let corners = Taps::at(t.inverse([xb as f64, yb as f64])).corners();
            for ci in 0..c {
                let plane = &src[ci * h * w..(ci + 1) * h * w];
                dst[(ci * oh + yb) * ow + xb] =
                    corners.iter().map(|&(x, y, wgt)| wgt * pixel(plane, (h, w), x, y)).sum();
            }
        }
    }
    Ok(out)
}

/// Everything the warp passes back upstream.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGradients {
    pub d_a: f64,
    pub d_b: f64,
    pub d_src_mean: Point,
    pub d_dst_mean: Point,
    /// Filled by [`landmark_and_canonical_gradients`].
    pub d_landmarks: Vec<Point>,
    /// Filled by [`landmark_and_canonical_gradients`].
    pub d_canonical: Vec<Point>,
    pub d_source: Tensor<f64>,
}

impl TransformGradients {
    pub fn is_finite(&self) -> bool {
        [self.d_a, self.d_b, self.d_src_mean[0], self.d_src_mean[1], self.d_dst_mean[0], self.d_dst_mean[1]]
            .iter()
            .chain(self.d_landmarks.iter().flatten())
            .chain(self.d_canonical.iter().flatten())
            .all(|v| v.is_finite())
            && self.d_source.is_finite()
    }
}

/// Backpropagates `upstream` (same shape as the warp output) into the
/// transform parameters, both centroids and the source pixels.
pub fn warp_backward(upstream: &Tensor<f64>, source: &Tensor<f64>, t: &SimilarityTransform) -> Result<TransformGradients> {
    let (c, h, w) = source.chw()?;
    let (uc, oh, ow) = upstream.chw()?;
    if uc != c {
        return Err(Error::shape(format!("upstream has {uc} channels, source {c}")));
    }
    let (a, b) = (t.a, t.b);
    let d = a * a + b * b;
    let mut g = TransformGradients {
        d_a: 0.0,
        d_b: 0.0,
        d_src_mean: [0.0; 2],
        d_dst_mean: [0.0; 2],
        d_landmarks: Vec::new(),
        d_canonical: Vec::new(),
        d_source: Tensor::zeros(source.shape()),
    };
    let src = source.data();
    let up = upstream.data();
    let ds = g.d_source.data_mut();
    for yb in 0..oh {
        for xb in 0..ow {
            let q = [xb as f64, yb as f64];
            let taps = Taps::at(t.inverse(q));
            let corners = taps.corners();
            let (mut gx, mut gy) = (0.0, 0.0);
            for ci in 0..c {
                let gu = up[(ci * oh + yb) * ow + xb];
                if gu == 0.0 {
                    continue;
                }
                let plane = &src[ci * h * w..(ci + 1) * h * w];
                let (ix, iy) = image_gradient(plane, (h, w), &taps);
                gx += gu * ix;
                gy += gu * iy;
                for &(x, y, wgt) in &corners {
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        ds[(ci * h + y as usize) * w + x as usize] += gu * wgt;
                    }
                }
            }
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let u = q[0] - t.dst_mean[0];
            let v = q[1] - t.dst_mean[1];
            let xn = a * u - b * v;
            let yn = b * u + a * v;
            let dx_da = u / d - 2.0 * a * xn / (d * d);
            let dx_db = -v / d - 2.0 * b * xn / (d * d);
            let dy_da = v / d - 2.0 * a * yn / (d * d);
            let dy_db = u / d - 2.0 * b * yn / (d * d);
            g.d_a += gx * dx_da + gy * dy_da;
            g.d_b += gx * dx_db + gy * dy_db;
            g.d_src_mean[0] += gx;
            g.d_src_mean[1] += gy;
            g.d_dst_mean[0] += gx * (-a / d) + gy * (-b / d);
            g.d_dst_mean[1] += gx * (b / d) + gy * (-a / d);
        }
    }
    Ok(g)
}

/// Chains `d_a`, `d_b` and the centroid gradients through the least-squares
/// fit into every landmark and canonical coordinate.
pub fn landmark_and_canonical_gradients(
    g: &mut TransformGradients,
    landmarks: &LandmarkSet,
    canonical: &CanonicalShape,
) -> Result<()> {
    check_pair(landmarks, canonical)?;
    let (c1, c2, c3, m, mb) = lsq_sums(&landmarks.points, &canonical.points);
    let threshold = singular_threshold(&canonical.points);
    if !(c3 > threshold) {
        return Err(Error::Singular { c3, threshold });
    }
    let n = landmarks.len() as f64;
    let c3sq = c3 * c3;
    g.d_landmarks.clear();
    g.d_canonical.clear();
    for (p, q) in landmarks.points.iter().zip(&canonical.points) {
        let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
        let (dxb, dyb) = (q[0] - mb[0], q[1] - mb[1]);
        // Centering terms vanish because deviations sum to zero.
        let da_dx = (dxb * c3 - c1 * 2.0 * dx) / c3sq;
        let da_dy = (dyb * c3 - c1 * 2.0 * dy) / c3sq;
        let db_dx = (-dyb * c3 - c2 * 2.0 * dx) / c3sq;
        let db_dy = (dxb * c3 - c2 * 2.0 * dy) / c3sq;
        g.d_landmarks.push([
            g.d_a * da_dx + g.d_b * db_dx + g.d_src_mean[0] / n,
            g.d_a * da_dy + g.d_b * db_dy + g.d_src_mean[1] / n,
        ]);
        g.d_canonical.push([
            (g.d_a * dx + g.d_b * dy) / c3 + g.d_dst_mean[0] / n,
            (g.d_a * dy - g.d_b * dx) / c3 + g.d_dst_mean[1] / n,
        ]);
    }
    Ok(())
}

/// Warp plus full backward pass in one call; the usual entry point in training.
pub fn warp_with_gradients(
    upstream: &Tensor<f64>,
    source: &Tensor<f64>,
    landmarks: &LandmarkSet,
    canonical: &CanonicalShape,
) -> Result<TransformGradients> {
    let t = estimate_similarity(landmarks, canonical)?;
    let mut g = warp_backward(upstream, source, &t)?;
    landmark_and_canonical_gradients(&mut g, landmarks, canonical)?;
    Ok(g)
}

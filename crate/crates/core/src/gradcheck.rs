//! Central finite differences, shared by tests and the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stn::{
    estimate_similarity, landmark_and_canonical_gradients, warp, warp_backward, CanonicalShape, LandmarkSet, Point,
    SimilarityTransform,
};
use crate::tensor::Tensor;

/// Denominator floor for [`relative_error`], so exact zeros compare sanely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// `(f(x + h) - f(x - h)) / 2h`, perturbing `x[index]` in place.
pub fn central_difference<F>(x: &mut [f64], index: usize, step: f64, mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let orig = x[index];
    x[index] = orig + step;
    let plus = f(x);
    x[index] = orig - step;
    let minus = f(x);
    x[index] = orig;
    (plus - minus) / (2.0 * step)
}

/// One row of a gradient-check report.
#[derive(Debug, Clone, PartialEq)]
pub struct GradRow {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradRow {
    pub fn rel_err(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }
}

/// Rectified size used by [`warp_chain_case`].
pub const CHAIN_OUT: (usize, usize) = (16, 16);

fn smooth_source(h: usize, w: usize, phase: f64) -> Tensor<f64> {
    Tensor::from_fn(&[1, h, w], |i| {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        0.5 + 0.3 * (0.29 * x + 0.17 * y + phase).sin() + 0.2 * (0.21 * y - 0.13 * x).cos()
    })
}

fn weighted(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn cells(t: &SimilarityTransform) -> Vec<(f64, f64)> {
    let (h, w) = CHAIN_OUT;
    (0..h * w)
        .map(|i| {
            let p = t.inverse([(i % w) as f64, (i / w) as f64]);
            (p[0].floor(), p[1].floor())
        })
        .collect()
}

/// One seeded gradient check of the loss `sum(r * warp(source))` through the
/// least-squares fit: rows for `a`, `b`, both centroids, every landmark and
/// every canonical coordinate. Returns `None` when a perturbation of size
/// `step` would move a rectified sample into another bilinear cell, where
/// the loss is not differentiable.
pub fn warp_chain_case(seed: u64, step: f64) -> Option<Vec<GradRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = smooth_source(40, 40, rng.gen_range(0.0..6.0));
    let base = [[4.6, 5.2], [11.4, 5.2], [8.0, 9.6], [5.0, 12.4], [11.0, 12.4]];
    let can: Vec<Point> = base.iter().map(|p: &Point| [p[0] + rng.gen_range(-0.5..0.5), p[1] + rng.gen_range(-0.5..0.5)]).collect();
    let th: f64 = rng.gen_range(-0.7..0.7);
    let s: f64 = rng.gen_range(1.2..2.0);
    let (tx, ty) = (rng.gen_range(4.0..10.0), rng.gen_range(4.0..10.0));
    let lm: Vec<Point> = can
        .iter()
        .map(|p| {
            [
                s * (th.cos() * p[0] - th.sin() * p[1]) + tx + rng.gen_range(-0.6..0.6),
                s * (th.sin() * p[0] + th.cos() * p[1]) + ty + rng.gen_range(-0.6..0.6),
            ]
        })
        .collect();
    let r = Tensor::from_fn(&[1, CHAIN_OUT.0, CHAIN_OUT.1], |_| rng.gen_range(-1.0..1.0));

    let flat: Vec<f64> = lm.iter().chain(&can).flatten().copied().collect();
    let unflatten = |v: &[f64]| -> (LandmarkSet, CanonicalShape) {
        let pts: Vec<Point> = v.chunks(2).map(|c| [c[0], c[1]]).collect();
        (LandmarkSet::new(pts[..5].to_vec()).unwrap(), CanonicalShape::new(pts[5..].to_vec(), true).unwrap())
    };
    let fit = |v: &[f64]| {
        let (l, c) = unflatten(v);
        estimate_similarity(&l, &c).ok()
    };
    let t0 = fit(&flat)?;
    let params = [t0.a, t0.b, t0.src_mean[0], t0.src_mean[1], t0.dst_mean[0], t0.dst_mean[1]];
    let from_params = |p: &[f64]| SimilarityTransform::new(p[0], p[1], [p[2], p[3]], [p[4], p[5]]).ok();

    let base_cells = cells(&t0);
    for i in 0..params.len() + flat.len() {
        for d in [step, -step] {
            let t = if i < params.len() {
                let mut p = params;
                p[i] += d;
                from_params(&p)?
            } else {
                let mut v = flat.clone();
                v[i - params.len()] += d;
                fit(&v)?
            };
            if cells(&t) != base_cells {
                return None;
            }
        }
    }

    let (l0, c0) = unflatten(&flat);
    let mut g = warp_backward(&r, &source, &t0).ok()?;
    landmark_and_canonical_gradients(&mut g, &l0, &c0).ok()?;
    let loss = |t: &SimilarityTransform| weighted(&warp(&source, t, CHAIN_OUT).unwrap(), &r);

    let mut rows = Vec::new();
    let names = ["a", "b", "src_mean.x", "src_mean.y", "dst_mean.x", "dst_mean.y"];
    let analytic = [g.d_a, g.d_b, g.d_src_mean[0], g.d_src_mean[1], g.d_dst_mean[0], g.d_dst_mean[1]];
    let mut p = params.to_vec();
    for (i, name) in names.iter().enumerate() {
        let numeric = central_difference(&mut p, i, step, |v| loss(&from_params(v).unwrap()));
        rows.push(GradRow { name: name.to_string(), analytic: analytic[i], numeric });
    }
    let analytic: Vec<f64> = g.d_landmarks.iter().chain(&g.d_canonical).flatten().copied().collect();
    let mut v = flat.clone();
    for (i, &an) in analytic.iter().enumerate() {
        let numeric = central_difference(&mut v, i, step, |v| loss(&fit(v).unwrap()));
        let kind = if i < 10 { "landmark" } else { "canonical" };
        let axis = if i % 2 == 0 { "x" } else { "y" };
        rows.push(GradRow { name: format!("{kind}[{}].{axis}", (i % 10) / 2), analytic: an, numeric });
    }
    Some(rows)
}

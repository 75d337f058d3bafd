//! Parametric glyph faces: a disc with two eye blobs, a nose wedge and a
//! mouth bar, rotated about the face centre and scattered over a textured
//! background with distractor clutter. Boxes and landmarks come straight from
//! the render parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use stnface_core::image::GrayImage;
use stnface_core::stn::Point;
use stnface_core::BBox;

/// Landmark layout in face-size units, relative to the face centre:
/// left eye, right eye, nose tip, left and right mouth corner.
pub const LAYOUT: [Point; 5] = [[-0.19, -0.13], [0.19, -0.13], [0.0, 0.12], [-0.17, 0.25], [0.17, 0.25]];

const EYE_RADIUS: f64 = 0.075;
const MOUTH_HALF_HEIGHT: f64 = 0.035;
const NOSE_TOP: f64 = -0.02;
const NOSE_HALF_WIDTH: f64 = 0.07;

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub bbox: BBox,
    pub landmarks: [Point; 5],
}

#[derive(Debug, Clone)]
pub struct AnnotatedSample {
    pub image: GrayImage,
    pub faces: Vec<Face>,
    pub provenance: String,
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub min_faces: usize,
    pub max_faces: usize,
    /// Face side range in pixels, `[min, max)`.
    pub min_face: f64,
    pub max_face: f64,
    pub max_rotation_deg: f64,
    pub noise_sigma: f64,
    pub clutter: usize,
    /// When false, face parameters are still drawn but nothing is painted.
    pub draw_faces: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 160,
            height: 120,
            min_faces: 1,
            max_faces: 3,
            min_face: 36.0,
            max_face: 72.0,
            max_rotation_deg: 45.0,
            noise_sigma: 6.0,
            clutter: 8,
            draw_faces: true,
        }
    }
}

impl SynthParams {
    /// Small single-face images used for training.
    pub fn training() -> Self {
        SynthParams { width: 96, height: 96, min_faces: 0, max_faces: 1, clutter: 4, ..SynthParams::default() }
    }
}

/// Face centred at `c` with side `s` and rotation `theta` (radians,
/// counter-clockwise on screen is negative because `y` points down).
pub fn face_landmarks(c: Point, s: f64, theta: f64) -> [Point; 5] {
    let (sin, cos) = theta.sin_cos();
    LAYOUT.map(|[u, v]| [c[0] + s * (cos * u - sin * v), c[1] + s * (sin * u + cos * v)])
}

struct Glyph {
    c: Point,
    s: f64,
    sin: f64,
    cos: f64,
    skin: f64,
    feature: f64,
}

impl Glyph {
    /// Intensity of the glyph at a pixel, `None` outside the disc.
    fn shade(&self, x: f64, y: f64) -> Option<f64> {
        let (dx, dy) = ((x - self.c[0]) / self.s, (y - self.c[1]) / self.s);
        if dx * dx + dy * dy > 0.25 {
            return None;
        }
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        let eye = LAYOUT[..2].iter().any(|e| (u - e[0]).powi(2) + (v - e[1]).powi(2) <= EYE_RADIUS * EYE_RADIUS);
        let mouth = u.abs() <= LAYOUT[4][0] && (v - LAYOUT[3][1]).abs() <= MOUTH_HALF_HEIGHT;
        let nose_t = (v - NOSE_TOP) / (LAYOUT[2][1] - NOSE_TOP);
        let nose = (0.0..=1.0).contains(&nose_t) && u.abs() <= NOSE_HALF_WIDTH * (1.0 - nose_t);
        Some(if eye || mouth {
            self.feature
        } else if nose {
            0.5 * (self.skin + self.feature)
        } else {
            self.skin
        })
    }
}

enum Clutter {
    Blob { c: Point, r: f64, v: f64 },
    Bar { c: Point, half: (f64, f64), sin: f64, cos: f64, v: f64 },
    Disc { c: Point, r: f64, v: f64 },
    Ring { c: Point, r: f64, w: f64, v: f64 },
}

impl Clutter {
    fn random(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Clutter {
        let c = [rng.gen_range(0.0..w), rng.gen_range(0.0..h)];
        let v = rng.gen_range(0.0..255.0);
        match rng.gen_range(0..4) {
            0 => Clutter::Blob { c, r: rng.gen_range(2.5..8.0), v },
            1 => {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                Clutter::Bar { c, half: (rng.gen_range(4.0..20.0), rng.gen_range(1.0..3.5)), sin: t.sin(), cos: t.cos(), v }
            }
            2 => Clutter::Disc { c, r: rng.gen_range(12.0..32.0), v },
            _ => Clutter::Ring { c, r: rng.gen_range(8.0..25.0), w: rng.gen_range(1.5..4.0), v },
        }
    }

    fn extent(&self) -> BBox {
        match *self {
            Clutter::Blob { c, r, .. } | Clutter::Disc { c, r, .. } => BBox::from_center(c[0], c[1], 2.0 * r, 2.0 * r),
            Clutter::Bar { c, half, .. } => BBox::from_center(c[0], c[1], 2.0 * half.0, 2.0 * half.0),
            Clutter::Ring { c, r, w, .. } => BBox::from_center(c[0], c[1], 2.0 * (r + w), 2.0 * (r + w)),
        }
    }

    fn shade(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            Clutter::Blob { c, r, v } | Clutter::Disc { c, r, v } => {
                ((x - c[0]).powi(2) + (y - c[1]).powi(2) <= r * r).then_some(v)
            }
            Clutter::Bar { c, half, sin, cos, v } => {
                let (dx, dy) = (x - c[0], y - c[1]);
                let (u, w) = (cos * dx + sin * dy, -sin * dx + cos * dy);
                (u.abs() <= half.0 && w.abs() <= half.1).then_some(v)
            }
            Clutter::Ring { c, r, w, v } => {
                let d = ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt();
                ((d - r).abs() <= w / 2.0).then_some(v)
            }
        }
    }
}

/// Renders one sample from its own random stream.
pub fn render_sample(rng: &mut ChaCha8Rng, p: &SynthParams) -> (GrayImage, Vec<Face>) {
    let (w, h) = (p.width as f64, p.height as f64);
    let n_faces = rng.gen_range(p.min_faces..=p.max_faces);
    let mut glyphs: Vec<Glyph> = Vec::new();
    let mut faces = Vec::new();
    for _ in 0..n_faces {
        for _attempt in 0..50 {
            let s = rng.gen_range(p.min_face..p.max_face).min(w.min(h) - 2.0);
            let c = [rng.gen_range(s / 2.0 + 1.0..w - s / 2.0 - 1.0), rng.gen_range(s / 2.0 + 1.0..h - s / 2.0 - 1.0)];
            let bbox = BBox::from_center(c[0], c[1], s, s);
            if faces.iter().any(|f: &Face| f.bbox.intersection(&bbox) > 0.0) {
                continue;
            }
            let theta = rng.gen_range(-1.0..=1.0) * p.max_rotation_deg.to_radians();
            let skin = rng.gen_range(140.0..225.0);
            let feature = rng.gen_range(10.0..skin - 80.0);
            let (sin, cos) = theta.sin_cos();
            glyphs.push(Glyph { c, s, sin, cos, skin, feature });
            faces.push(Face { bbox, landmarks: face_landmarks(c, s, theta) });
            break;
        }
    }

    let g0 = rng.gen_range(40.0..200.0);
    let g1 = rng.gen_range(40.0..200.0);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (ta, tb, tph) = (rng.gen_range(0.02..0.12), rng.gen_range(0.02..0.12), rng.gen_range(0.0..6.3));
    let tex_amp = rng.gen_range(0.0..25.0);
    let mut clutter = Vec::new();
    for _ in 0..p.clutter * 4 {
        if clutter.len() == p.clutter {
            break;
        }
        let c = Clutter::random(rng, w, h);
        if faces.iter().all(|f| f.bbox.intersection(&c.extent()) <= 0.0) {
            clutter.push(c);
        }
    }
    let noise = Normal::new(0.0, p.noise_sigma.max(0.0)).expect("finite sigma");
    let mut img = GrayImage::new(p.width, p.height);
    for y in 0..p.height {
        for x in 0..p.width {
            let (xf, yf) = (x as f64, y as f64);
            let t = ((xf / w - 0.5) * angle.cos() + (yf / h - 0.5) * angle.sin() + 0.5).clamp(0.0, 1.0);
            let mut v = g0 + (g1 - g0) * t + tex_amp * (ta * xf + tb * yf + tph).sin();
            for c in &clutter {
                if let Some(cv) = c.shade(xf, yf) {
                    v = cv;
                }
            }
            for g in glyphs.iter().filter(|_| p.draw_faces) {
                if let Some(gv) = g.shade(xf, yf) {
                    v = gv;
                }
            }
            if p.noise_sigma > 0.0 {
                v += noise.sample(rng);
            }
            img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    (img, faces)
}

/// `count` samples; sample `i` draws from stream `i` of the seed so any
/// prefix of a corpus is reproducible on its own.
pub fn generate_synthetic_corpus(seed: u64, count: usize, params: &SynthParams) -> Vec<AnnotatedSample> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (image, faces) = render_sample(&mut rng, params);
            AnnotatedSample { image, faces, provenance: format!("synthetic:{seed}:{i}") }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic_corpus(5, 4, &SynthParams::default());
        let b = generate_synthetic_corpus(5, 4, &SynthParams::default());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.faces, y.faces);
        }
        let c = generate_synthetic_corpus(6, 1, &SynthParams::default());
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn upright_landmarks_follow_layout() {
        let lm = face_landmarks([50.0, 40.0], 40.0, 0.0);
        assert_eq!(lm[0], [50.0 - 7.6, 40.0 - 5.2]);
        assert_eq!(lm[2], [50.0, 40.0 + 4.8]);
        assert_eq!(lm[4], [50.0 + 6.8, 50.0]);
    }

    #[test]
    fn landmarks_inside_boxes() {
        for s in generate_synthetic_corpus(9, 20, &SynthParams::default()) {
            for f in &s.faces {
                for p in &f.landmarks {
                    assert!(p[0] > f.bbox.x && p[0] < f.bbox.x + f.bbox.w);
                    assert!(p[1] > f.bbox.y && p[1] < f.bbox.y + f.bbox.h);
                }
            }
        }
    }
}

use stnface::synth::{face_landmarks, generate_synthetic_corpus, SynthParams, LAYOUT};
use stnface_core::BBox;

#[test]
fn boxes_match_rendered_support() {
    let quiet = SynthParams { noise_sigma: 0.0, ..SynthParams::default() };
    let with = generate_synthetic_corpus(21, 30, &quiet);
    let without = generate_synthetic_corpus(21, 30, &SynthParams { draw_faces: false, ..quiet.clone() });
    let mut checked = 0;
    for (a, b) in with.iter().zip(&without) {
        assert_eq!(a.faces, b.faces);
        for f in &a.faces {
            // Bounding box of changed pixels inside a margin around the face.
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            let m = BBox::from_center(f.bbox.center().0, f.bbox.center().1, f.bbox.w + 4.0, f.bbox.h + 4.0);
            for y in 0..a.image.height() {
                for x in 0..a.image.width() {
                    let inside = (x as f64) >= m.x && (x as f64) < m.x + m.w && (y as f64) >= m.y && (y as f64) < m.y + m.h;
                    if inside && a.image.get(x, y) != b.image.get(x, y) {
                        (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
                    }
                }
            }
            let support = BBox::new(x0 as f64, y0 as f64, (x1 + 1 - x0) as f64, (y1 + 1 - y0) as f64);
            let iou = support.iou(&f.bbox);
            assert!(iou >= 0.9, "support {support:?} vs {:?}: IoU {iou:.3}", f.bbox);
            checked += 1;
        }
    }
    assert!(checked > 30);
}

#[test]
fn noiseless_upright_faces_sit_on_the_layout() {
    let p = SynthParams { max_rotation_deg: 0.0, noise_sigma: 0.0, ..SynthParams::default() };
    for s in generate_synthetic_corpus(4, 10, &p) {
        for f in &s.faces {
            let (cx, cy) = f.bbox.center();
            let c = [cx, cy];
            for (got, [u, v]) in f.landmarks.iter().zip(LAYOUT) {
                assert!((got[0] - (c[0] + f.bbox.w * u)).abs() < 1e-9);
                assert!((got[1] - (c[1] + f.bbox.w * v)).abs() < 1e-9);
            }
            assert_eq!(f.landmarks, face_landmarks(c, f.bbox.w, 0.0));
        }
    }
}

#[test]
fn corpus_prefixes_are_stable() {
    let long = generate_synthetic_corpus(8, 6, &SynthParams::training());
    let short = generate_synthetic_corpus(8, 3, &SynthParams::training());
    for (a, b) in short.iter().zip(&long) {
        assert_eq!(a.image, b.image);
        assert_eq!(a.faces, b.faces);
    }
}

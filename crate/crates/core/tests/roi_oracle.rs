use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnface_core::image::GrayImage;
use stnface_core::nn::{conv2d_forward, im2col, maxpool2x2, ConvSpec};
use stnface_core::roi::*;
use stnface_core::{BBox, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> RoiMask {
    RoiMask::from_bits(w, h, (0..w * h).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

#[test]
fn random_triples_match_dense_at_masked_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..80 {
        let c = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        let s = rng.gen_range(1..=2);
        let p = rng.gen_range(0..k);
        let (h, w) = (rng.gen_range(k.max(3)..=12), rng.gen_range(k.max(3)..=12));
        let spec = ConvSpec::new(c, n, k, s, p).unwrap();
        let input = random(&mut rng, &[c, h, w]);
        let filters = random(&mut rng, &spec.filter_shape());
        let (ho, wo) = spec.output_size(h, w).unwrap();
        let density = rng.gen_range(0.0..1.0);
        let mask = random_mask(&mut rng, wo, ho, density);
        let dense = conv2d_forward(&input, &filters, &spec).unwrap();
        let roi = roi_conv_forward(&input, &filters, &mask, &spec).unwrap();
        let roi32 = roi_conv_forward(&input.cast::<f32>(), &filters.cast::<f32>(), &mask, &spec).unwrap();
        assert_eq!(roi.macs, (mask.count() * c * k * k * n) as u64);
        for o in 0..n {
            for y in 0..ho {
                for x in 0..wo {
                    let (got, got32) = (roi.output.at3(o, y, x), roi32.output.at3(o, y, x) as f64);
                    if mask.get(x, y) {
                        assert!((got - dense.at3(o, y, x)).abs() < 1e-12);
                        assert!((got32 - dense.at3(o, y, x)).abs() < 1e-5);
                    } else {
                        assert_eq!((got, got32), (0.0, 0.0));
                    }
                }
            }
        }

        let (d, pos) = roi_im2col(&input, &mask, &spec).unwrap();
        let full = im2col(&input, &spec).unwrap();
        let plen = spec.patch_len();
        assert_eq!(d.shape(), &[mask.count(), plen]);
        for (row, &q) in pos.iter().enumerate() {
            assert_eq!(&d.data()[row * plen..(row + 1) * plen], &full.data()[q * plen..(q + 1) * plen]);
        }
    }
}

#[test]
fn thirty_percent_mask_mac_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let spec = ConvSpec::new(3, 8, 3, 1, 1).unwrap();
    let (w, h) = (40, 30);
    let mut bits = vec![false; w * h];
    let mut idx: Vec<usize> = (0..w * h).collect();
    for i in (1..idx.len()).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    idx[..w * h * 3 / 10].iter().for_each(|&i| bits[i] = true);
    let mask = RoiMask::from_bits(w, h, bits).unwrap();
    assert!((mask.sparsity() - 0.3).abs() < 1e-12);
    let input = random(&mut rng, &[3, h, w]);
    let roi = roi_conv_forward(&input, &random(&mut rng, &spec.filter_shape()), &mask, &spec).unwrap();
    assert_eq!(roi.macs, 360 * 3 * 9 * 8);
}

#[test]
fn mask_downsampling_examples() {
    let mut single = RoiMask::empty(12, 12);
    single.set(5, 7);
    let half = single.downsample();
    assert_eq!(half.positions(), vec![3 * 6 + 2]);
    for (w, h) in [(4, 4), (7, 5), (1, 1), (9, 2)] {
        let checker = RoiMask::from_bits(w, h, (0..w * h).map(|i| (i % w + i / w) % 2 == 0).collect()).unwrap();
        let d = checker.downsample();
        assert_eq!((d.width(), d.height()), (w.div_ceil(2), h.div_ceil(2)));
        assert_eq!(d.count(), d.width() * d.height());
        assert_eq!(RoiMask::full(w, h).downsample().count(), d.count());
    }
}

/// ANDs each 2x2 block, for comparison with the OR rule.
fn and_downsample(m: &RoiMask) -> RoiMask {
    let (w, h) = (m.width().div_ceil(2), m.height().div_ceil(2));
    let bits = (0..w * h)
        .map(|i| {
            let (x, y) = (2 * (i % w), 2 * (i / w));
            let x1 = (x + 1).min(m.width() - 1);
            let y1 = (y + 1).min(m.height() - 1);
            m.get(x, y) && m.get(x1, y) && m.get(x, y1) && m.get(x1, y1)
        })
        .collect();
    RoiMask::from_bits(w, h, bits).unwrap()
}

/// conv(3x3) -> pool -> conv(3x3), dense and masked; returns the final masks,
/// the masked output and the dense output.
fn run_stack(
    input: &Tensor<f64>,
    f1: &Tensor<f64>,
    f2: &Tensor<f64>,
    m0: &RoiMask,
    down: impl Fn(&RoiMask) -> RoiMask,
) -> (RoiMask, Tensor<f64>, Tensor<f64>) {
    let s1 = ConvSpec::new(1, 4, 3, 1, 1).unwrap();
    let s2 = ConvSpec::new(4, 3, 3, 1, 1).unwrap();
    let m1 = down(m0);
    let a = roi_conv_forward(input, f1, m0, &s1).unwrap().output;
    let b = roi_maxpool2x2(&a, &m1).unwrap();
    let roi = roi_conv_forward(&b, f2, &m1, &s2).unwrap().output;
    let dense = conv2d_forward(&maxpool2x2(&conv2d_forward(input, f1, &s1).unwrap()).unwrap().output, f2, &s2).unwrap();
    (m1, roi, dense)
}

/// Final positions whose full dependency cone stays inside the masks.
fn cone_inside(m0: &RoiMask, m1: &RoiMask, x: usize, y: usize) -> bool {
    let (w1, h1) = (m1.width() as isize, m1.height() as isize);
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let (px, py) = (x as isize + dx, y as isize + dy);
            if px < 0 || py < 0 || px >= w1 || py >= h1 {
                continue;
            }
            if !m1.get(px as usize, py as usize) {
                return false;
            }
            for (bx, by) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let cx = (2 * px as usize + bx).min(m0.width() - 1);
                let cy = (2 * py as usize + by).min(m0.height() - 1);
                if !m0.get(cx, cy) {
                    return false;
                }
            }
        }
    }
    true
}

#[test]
fn mask_propagation_is_sound_inside_candidate_regions() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (w, h) = (120, 96);
    let input = random(&mut rng, &[1, h, w]);
    let f1 = random(&mut rng, &[4, 1, 3, 3]);
    let f2 = random(&mut rng, &[3, 4, 3, 3]);
    let boxes = [BBox::new(10.0, 12.0, 40.0, 40.0), BBox::new(71.0, 43.0, 37.0, 37.0)];
    let groups = group_candidates(&boxes, (w, h));
    assert_eq!(groups.len(), 1);
    let m0 = build_mask(&groups[0], (w, h), 85.0);

    let (m1, roi, dense) = run_stack(&input, &f1, &f2, &m0, RoiMask::downsample);
    let mut sound = 0;
    for y in 0..m1.height() {
        for x in 0..m1.width() {
            if !cone_inside(&m0, &m1, x, y) {
                continue;
            }
            sound += 1;
            for o in 0..3 {
                assert!((roi.at3(o, y, x) - dense.at3(o, y, x)).abs() < 1e-12, "({x}, {y})");
            }
        }
    }
    // every final cell inside an original candidate box is covered
    for b in &boxes {
        for y in (b.y / 2.0).ceil() as usize..((b.y + b.h) / 2.0) as usize {
            for x in (b.x / 2.0).ceil() as usize..((b.x + b.w) / 2.0) as usize {
                assert!(cone_inside(&m0, &m1, x, y));
            }
        }
    }

    let (m_and, roi_and, _) = run_stack(&input, &f1, &f2, &m0, and_downsample);
    let mut sound_and = 0;
    for y in 0..m_and.height() {
        for x in 0..m_and.width() {
            assert!(!m_and.get(x, y) || m1.get(x, y));
            if m_and.get(x, y) && (0..3).all(|o| roi_and.at3(o, y, x) == dense.at3(o, y, x)) {
                sound_and += 1;
            }
        }
    }
    assert!(sound >= sound_and && sound > 0);
}

#[test]
fn receptive_field_table() {
    let stack = [
        LayerRfSpec::conv(7, 2),
        LayerRfSpec::pool(2, 2),
        LayerRfSpec::conv(1, 1),
        LayerRfSpec::conv(3, 1),
        LayerRfSpec::pool(2, 2),
        LayerRfSpec::composite(1, 4),
        LayerRfSpec::composite(1, 4),
    ];
    assert_eq!(receptive_field(&stack).unwrap(), vec![85, 40, 20, 20, 18, 9, 5]);
    assert_eq!(receptive_field(&[LayerRfSpec::conv(1, 1)]).unwrap(), vec![1]);
    assert_eq!(receptive_field(&[LayerRfSpec::conv(3, 1)]).unwrap(), vec![3]);
    assert!(receptive_field(&[]).is_err());
}

#[test]
fn grouping_is_total_and_rescales_into_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (w, h) = (1000, 800);
    let boxes: Vec<BBox> = (0..500)
        .map(|_| {
            let s = rng.gen_range(10.0..700.0);
            BBox::new(rng.gen_range(0.0..(w as f64 - s).max(1.0)), rng.gen_range(0.0..(h as f64 - s).max(1.0)), s, s * rng.gen_range(0.8..1.0))
        })
        .collect();
    let groups = group_candidates(&boxes, (w, h));
    let kept: usize = groups.iter().map(|g| g.candidates.len()).sum();
    assert_eq!(kept, boxes.iter().filter(|b| b.size() >= 36.0).count());
    for g in &groups {
        assert_eq!(g.max_face, 2.0 * g.min_face);
        for b in g.level_candidates() {
            assert!((36.0..72.0).contains(&b.size()), "{} in octave {}", b.size(), g.octave);
        }
    }
    assert_eq!(group_candidates(&[BBox::new(0.0, 0.0, 50.0, 50.0)], (200, 200))[0].octave, 0);
    let g = group_candidates(&[BBox::new(0.0, 0.0, 100.0, 100.0)], (200, 200));
    assert_eq!((g[0].octave, g[0].level_candidates()[0].size()), (1, 50.0));
}

#[test]
fn build_mask_examples() {
    let mask_for = |side: f64| {
        let g = group_candidates(&[BBox::from_center(100.0, 100.0, side, side)], (200, 200));
        build_mask(&g[0], (200, 200), 85.0)
    };
    let m = mask_for(40.0);
    assert_eq!(m.count(), 80 * 80);
    assert!(m.get(60, 60) && m.get(139, 139) && !m.get(140, 100) && !m.get(59, 100));
    assert_eq!(mask_for(60.0).count(), 85 * 85);
    let empty = build_mask(&ScaleGroup::new(0), (50, 50), 85.0);
    assert_eq!((empty.count(), empty.sparsity()), (0, 0.0));
}

#[test]
fn pyramid_extents_and_overhead() {
    let img = GrayImage::from_fn(333, 201, |x, y| (x * y % 251) as u8);
    let boxes: Vec<BBox> = (0..4).map(|k| BBox::new(0.0, 0.0, 40.0 * (1 << k) as f64, 40.0)).collect();
    let groups = group_candidates(&boxes, (2000, 2000));
    let pyr = build_roi_pyramid(&img, &groups, 85.0);
    assert_eq!(pyr.levels.len(), 4);
    for l in &pyr.levels {
        let f = 1usize << l.octave;
        assert_eq!((l.image.width(), l.image.height()), (333usize.div_ceil(f), 201usize.div_ceil(f)));
        assert_eq!((l.mask.width(), l.mask.height()), (l.image.width(), l.image.height()));
    }
    let base = 333.0 * 201.0;
    assert!(pyr.total_pixels() as f64 <= (1.0 + 1.0 / 3.0 + 0.02) * base);
    assert_eq!(geometric_overhead(1), 0.0);
    assert_eq!(geometric_overhead(4), 0.328125);
    assert!((pyramid_overhead((4096, 4096), 12) - 1.0 / 3.0).abs() < 1e-6);
}

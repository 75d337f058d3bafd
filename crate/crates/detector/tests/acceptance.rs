//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Trained models are shared between the detection
//! criteria, so AC7 and AC11 report only their own evaluation time.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stnface::bench::{bench_roiconv, ConvBench};
use stnface::config::CanonicalInit;
use stnface::detect::{detect, DetectOptions, Suppression};
use stnface::eval::{evaluate, MATCH_IOU};
use stnface::model::{inter_ocular, DetectorModel};
use stnface::synth::AnnotatedSample;
use stnface::train::{train_end_to_end, train_prefilter, train_rpn, verdict_accuracy};
use stnface::{generate_synthetic_corpus, DetectorConfig, SynthParams};
use stnface_core::fern::{cascade_score, partition_scores, train_cascade, CascadeModel, Fern, PatchView, Split, TrainConfig};
use stnface_core::gradcheck::warp_chain_case;
use stnface_core::image::GrayImage;
use stnface_core::nn::{conv2d_forward, ConvSpec};
use stnface_core::roi::{geometric_overhead, pyramid_overhead, receptive_field, roi_conv_forward, LayerRfSpec, RoiMask};
use stnface_core::suppression::{nms, non_top_k};
use stnface_core::{BBox, Detection, Result, Tensor};

const FALSE_ALARMS: usize = 10;
const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict { pass, detail: detail.into() })
}

fn run(id: &str, name: &str, budget_s: f64, f: impl FnOnce() -> Result<Verdict>) -> bool {
    let t = Instant::now();
    let out = f();
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) = match out {
        Ok(v) => (v.pass && secs <= budget_s, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{id} {} {name}: {detail} [{secs:.1} s, budget {budget_s:.0} s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn ac1() -> Result<Verdict> {
    let (mut cases, mut worst, mut seed) = (0, 0.0f64, 0u64);
    while cases < 20 {
        if let Some(rows) = warp_chain_case(seed, 1e-6) {
            worst = rows.iter().map(|r| r.rel_err()).fold(worst, f64::max);
            cases += 1;
        }
        seed += 1;
    }
    verdict(worst < 1e-4, format!("{cases} cases, worst relative error {worst:.2e}"))
}

fn ac2() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut leaks) = (0.0f64, 0usize);
    for _ in 0..120 {
        let c = rng.gen_range(1..=8);
        let (h, w) = (rng.gen_range(8..=64), rng.gen_range(8..=64));
        let kernel = [1, 3, 5, 7][rng.gen_range(0..4)];
        let stride = rng.gen_range(1..=2);
        let spec = ConvSpec::new(c, rng.gen_range(1..=8), kernel, stride, rng.gen_range(0..=kernel / 2))?;
        let input: Tensor<f64> = Tensor::from_fn(&[c, h, w], |_| rng.gen_range(-1.0..1.0));
        let filters = Tensor::from_fn(&spec.filter_shape(), |_| rng.gen_range(-1.0..1.0));
        let (ho, wo) = spec.output_size(h, w)?;
        let density = rng.gen_range(0.0..1.0);
        let mask = RoiMask::from_bits(wo, ho, (0..ho * wo).map(|_| rng.gen_bool(density)).collect())?;
        let roi = roi_conv_forward(&input, &filters, &mask, &spec)?.output;
        let dense = conv2d_forward(&input, &filters, &spec)?;
        for (i, (r, d)) in roi.data().iter().zip(dense.data()).enumerate() {
            if mask.bits()[i % (ho * wo)] {
                worst = worst.max((r - d).abs());
            } else if *r != 0.0 {
                leaks += 1;
            }
        }
    }
    verdict(worst <= 1e-12 && leaks == 0, format!("120 triples, max masked difference {worst:.1e}, {leaks} non-zero unmasked outputs"))
}

fn ac3() -> Result<Verdict> {
    let b = ConvBench::default();
    let rows = bench_roiconv(&b, &[0.05, 0.10, 0.30])?;
    let per_position = (b.in_channels * b.kernel * b.kernel * b.out_channels) as u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &rows {
        let positions = (r.sparsity * (b.width * b.height) as f64).round() as u64;
        let macs_ok = r.macs_roi == positions * per_position && r.macs_dense == (b.width * b.height) as u64 * per_position;
        let ratio = r.time_ratio();
        let in_band = ratio >= 0.6 * r.sparsity && ratio <= 2.0 * r.sparsity;
        pass &= macs_ok && in_band;
        parts.push(format!("s={:.3} ratio {:.3} ({:.2}s) macs {}", r.sparsity, ratio, ratio / r.sparsity, if macs_ok { "exact" } else { "WRONG" }));
    }
    verdict(pass, format!("{}x{}: {}", b.width, b.height, parts.join("; ")))
}

fn ac4() -> Result<Verdict> {
    let stack = [
        LayerRfSpec::conv(7, 2),
        LayerRfSpec::pool(2, 2),
        LayerRfSpec::conv(1, 1),
        LayerRfSpec::conv(3, 1),
        LayerRfSpec::pool(2, 2),
        LayerRfSpec::composite(1, 4),
        LayerRfSpec::composite(1, 4),
    ];
    let got = receptive_field(&stack)?;
    verdict(got == [85, 40, 20, 20, 18, 9, 5], format!("{got:?}"))
}

fn ac5() -> Result<Verdict> {
    let third = 1.0 / 3.0;
    let measured: Vec<f64> = (5..=10).map(|l| pyramid_overhead((640, 480), l)).collect();
    let closed: Vec<f64> = (5..=10).map(geometric_overhead).collect();
    let pass = measured.iter().chain(&closed).all(|v| (v - third).abs() <= 0.01);
    verdict(pass, format!("640x480 at 5 levels {:.4}, closed form {:.4}", measured[0], closed[0]))
}

fn centre_patch(rng: &mut ChaCha8Rng, bright: bool) -> GrayImage {
    GrayImage::from_fn(32, 32, |x, y| {
        let inside = (10..22).contains(&x) && (10..22).contains(&y);
        match (inside, bright) {
            (false, _) => rng.gen_range(60..140),
            (true, true) => rng.gen_range(180..=255),
            (true, false) => rng.gen_range(0..60),
        }
    })
}

fn ac9() -> Result<Verdict> {
    // Balanced piece: equal positive and negative weight lands in bin 3.
    let labels = [true, false, true, false, true];
    let weights = [0.25, 0.25, 0.1, 0.1, 0.3];
    let scores = partition_scores(&labels, &weights, &[3, 3, 3, 3, 7])?;
    let balanced = scores[3].abs() < 1e-15 && scores[7] > 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pos: Vec<_> = (0..200).map(|_| centre_patch(&mut rng, true)).collect();
    let neg: Vec<_> = (0..200).map(|_| centre_patch(&mut rng, false)).collect();
    let cfg = TrainConfig { num_ferns: 50, candidate_pool: 50, per_stage_detection_target: 1.0, seed: 3, ..TrainConfig::default() };
    let (_, report) = train_cascade(&pos, &neg, &cfg)?;
    let zero_at = report.training_error.iter().position(|&e| e == 0.0);

    let ferns: Vec<Fern> = (0..40)
        .map(|_| Fern {
            splits: std::array::from_fn(|_| Split {
                x1: rng.gen_range(0..32),
                y1: rng.gen_range(0..32),
                x2: rng.gen_range(0..32),
                y2: rng.gen_range(0..32),
                theta: rng.gen_range(-80..80),
            }),
            scores: Box::new(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))),
        })
        .collect();
    let thresholds: Vec<f64> = (0..40).map(|i| -3.0 + 0.05 * i as f64 + rng.gen_range(-0.5..0.5)).collect();
    let model = CascadeModel::new(ferns, thresholds.clone(), 32)?;
    let mut disagreements = 0;
    for _ in 0..10_000 {
        let img = GrayImage::from_fn(32, 32, |_, _| rng.gen());
        let p = PatchView::whole(&img);
        let full = model.prefix_scores(&p);
        let full_accepts = full.iter().zip(&thresholds).all(|(s, t)| s >= t);
        disagreements += (cascade_score(&p, &model).accepted() != full_accepts) as usize;
    }
    verdict(
        balanced && zero_at.is_some() && disagreements == 0,
        format!(
            "balanced piece score {:.1e}, zero training error after {} ferns, {disagreements} early-exit disagreements in 10000",
            scores[3],
            zero_at.map_or("never".to_string(), |i| (i + 1).to_string())
        ),
    )
}

fn keys(ds: &[Detection]) -> Vec<[u64; 5]> {
    let mut k: Vec<[u64; 5]> = ds.iter().map(|d| [d.score.to_bits(), d.bbox.x.to_bits(), d.bbox.y.to_bits(), d.bbox.w.to_bits(), d.bbox.h.to_bits()]).collect();
    k.sort_unstable();
    k
}

fn ac10() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = [0usize; 4];
    for _ in 0..1000 {
        let n = rng.gen_range(0..40);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let b = BBox::new(rng.gen_range(0..60) as f64, rng.gen_range(0..60) as f64, rng.gen_range(5..30) as f64, rng.gen_range(5..30) as f64);
                Detection::new(b, rng.gen_range(0..20) as f64 / 20.0)
            })
            .collect();
        let t = rng.gen_range(0.1..0.9);
        let k = rng.gen_range(1..6);
        let kept = nms(&dets, t)?;
        let top1 = non_top_k(&dets, t, 1)?;
        let topk = non_top_k(&dets, t, k)?;
        failures[0] += (keys(&top1) != keys(&kept)) as usize;
        let all = keys(&topk);
        failures[1] += !keys(&kept).iter().all(|x| all.binary_search(x).is_ok()) as usize;
        failures[2] += (keys(&nms(&kept, t)?) != keys(&kept)) as usize;
        failures[3] += (keys(&non_top_k(&topk, t, k)?) != all) as usize;
    }
    verdict(
        failures.iter().all(|&f| f == 0),
        format!("1000 sets: K=1 vs NMS {}, containment {}, NMS idempotence {}, Non-top-K idempotence {} failures", failures[0], failures[1], failures[2], failures[3]),
    )
}

fn training_corpus(seed: u64, n: usize) -> Vec<AnnotatedSample> {
    generate_synthetic_corpus(1000 + seed, n, &SynthParams::training())
}

fn ac6() -> Result<Verdict> {
    let cfg = DetectorConfig::default();
    let train = training_corpus(60, 2000);
    let val = generate_synthetic_corpus(61, 300, &SynthParams::training());
    let (cascade, _) = train_prefilter(&train[..200], &DetectorConfig { cascade_ferns: 2, ..cfg.clone() })?;
    let (rpn, _) = train_rpn(&train, &cfg)?;
    let mut shapes = Vec::new();
    let mut accs = Vec::new();
    for init in [CanonicalInit::Large, CanonicalInit::Small, CanonicalInit::Offset] {
        let c = DetectorConfig { canonical_init: init, ..cfg.clone() };
        let (model, _) = train_end_to_end(&train, cascade.clone(), rpn.clone(), &c)?;
        accs.push(verdict_accuracy(&model, &val, cfg.samples_per_image, cfg.negative_iou, 7)?);
        shapes.push(model.canonical);
    }
    let iod = shapes.iter().map(inter_ocular).sum::<f64>() / 3.0;
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in i + 1..3 {
            worst = worst.max(shapes[i].rms_distance(&shapes[j]));
        }
    }
    let spread = accs.iter().cloned().fold(f64::MIN, f64::max) - accs.iter().cloned().fold(f64::MAX, f64::min);
    verdict(
        worst < 0.1 * iod && spread <= 0.01,
        format!(
            "worst pairwise RMS {worst:.2} px = {:.1}% of inter-ocular {iod:.2} px; verdict accuracy {:.3}/{:.3}/{:.3} (spread {:.1} points)",
            100.0 * worst / iod,
            accs[0],
            accs[1],
            accs[2],
            100.0 * spread
        ),
    )
}

struct SeedModels {
    full: DetectorModel,
    no_landmarks: DetectorModel,
    fixed_canonical: DetectorModel,
    no_concat: DetectorModel,
}

fn train_seed(seed: u64) -> Result<SeedModels> {
    let cfg = DetectorConfig { seed, ..DetectorConfig::default() };
    let train = training_corpus(seed, 1000);
    let (cascade, _) = train_prefilter(&train, &cfg)?;
    let (rpn, _) = train_rpn(&train, &cfg)?;
    let box_cfg = DetectorConfig { landmarks: false, ..cfg.clone() };
    let (box_rpn, _) = train_rpn(&train, &box_cfg)?;
    let e2e = |c: &DetectorConfig, rpn: &stnface::rpn::Rpn| train_end_to_end(&train, cascade.clone(), rpn.clone(), c).map(|(m, _)| m);
    Ok(SeedModels {
        full: e2e(&cfg, &rpn)?,
        no_landmarks: e2e(&box_cfg, &box_rpn)?,
        fixed_canonical: e2e(&DetectorConfig { learn_canonical: false, ..cfg.clone() }, &rpn)?,
        no_concat: e2e(&DetectorConfig { concat: false, ..cfg.clone() }, &rpn)?,
    })
}

fn test_set() -> Vec<AnnotatedSample> {
    generate_synthetic_corpus(5000, 500, &SynthParams::default())
}

fn recall_at_budget(model: &DetectorModel, test: &[AnnotatedSample], opts: &DetectOptions) -> Result<f64> {
    // Every verified candidate is kept; the budget picks the operating point.
    let opts = DetectOptions { verdict_threshold: Some(0.0), ..*opts };
    let dets = test.iter().map(|s| detect(&s.image, model, &opts)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<Vec<BBox>> = test.iter().map(|s| s.faces.iter().map(|f| f.bbox).collect()).collect();
    Ok(evaluate(&dets, &truth, MATCH_IOU, FALSE_ALARMS).recall_at_budget)
}

fn ac8(models: &[SeedModels], test: &[AnnotatedSample]) -> Result<Verdict> {
    let opts = DetectOptions::default();
    let mut wins = [0usize; 3];
    let mut rows = Vec::new();
    for m in models {
        let full = recall_at_budget(&m.full, test, &opts)?;
        let others = [
            recall_at_budget(&m.no_landmarks, test, &opts)?,
            recall_at_budget(&m.fixed_canonical, test, &opts)?,
            recall_at_budget(&m.no_concat, test, &opts)?,
        ];
        for (w, o) in wins.iter_mut().zip(others) {
            *w += (full >= o) as usize;
        }
        rows.push(format!("full {full:.3} / no-landmark {:.3} / fixed canonical {:.3} / no-concat {:.3}", others[0], others[1], others[2]));
    }
    let majority = models.len() / 2 + 1;
    verdict(
        wins.iter().all(|&w| w >= majority),
        format!("seeds won {wins:?} of {}; {}", models.len(), rows.join("; ")),
    )
}

fn ac7(models: &[SeedModels], test: &[AnnotatedSample]) -> Result<Verdict> {
    let mut pass = true;
    let mut rows = Vec::new();
    for m in models {
        let ntk = recall_at_budget(&m.full, test, &DetectOptions { suppression: Suppression::NonTopK { k: 3 }, ..Default::default() })?;
        let nms = recall_at_budget(&m.full, test, &DetectOptions { suppression: Suppression::NmsMatched { k: 3 }, ..Default::default() })?;
        pass &= ntk >= nms;
        rows.push(format!("{ntk:.3} vs {nms:.3}"));
    }
    verdict(pass, format!("Non-top-K vs matched NMS per seed: {}", rows.join(", ")))
}

fn ac11(models: &[SeedModels], test: &[AnnotatedSample]) -> Result<Verdict> {
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for m in models {
        let roi = recall_at_budget(&m.full, test, &DetectOptions::default())?;
        let dense = recall_at_budget(&m.full, test, &DetectOptions { use_roi_conv: false, ..Default::default() })?;
        worst = worst.max((roi - dense).abs());
        rows.push(format!("{roi:.3} vs {dense:.3}"));
    }
    verdict(worst <= 0.015, format!("ROI vs dense per seed: {}; largest gap {:.1} points", rows.join(", "), 100.0 * worst))
}

fn main() {
    let mut results = vec![
        run("AC1", "gradient fidelity", 10.0, ac1),
        run("AC2", "ROI convolution oracle", 30.0, ac2),
        run("AC3", "sparsity proportionality", 120.0, ac3),
        run("AC4", "receptive-field table", 1.0, ac4),
        run("AC5", "pyramid overhead", 1.0, ac5),
        run("AC9", "fern/RealBoost soundness", 60.0, ac9),
        run("AC10", "suppression properties", 30.0, ac10),
        run("AC6", "canonical convergence", 900.0, ac6),
    ];

    let t = Instant::now();
    let models = SEEDS.iter().map(|&s| train_seed(s)).collect::<Result<Vec<_>>>();
    println!("trained {} seeds x 4 variants in {:.1} s", SEEDS.len(), t.elapsed().as_secs_f64());
    match models {
        Ok(models) => {
            let test = test_set();
            results.push(run("AC8", "ablation ordering", f64::INFINITY, || ac8(&models, &test)));
            results.push(run("AC7", "Non-top-K vs NMS", 600.0, || ac7(&models, &test)));
            results.push(run("AC11", "ROI/dense agreement", 600.0, || ac11(&models, &test)));
        }
        Err(e) => {
            for id in ["AC8", "AC7", "AC11"] {
                println!("{id} FAIL: training failed: {e}");
                results.push(false);
            }
        }
    }
    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stnface::bench::{bench_pipeline, bench_roiconv, mean_row, ConvBench, PipelineRow, SparsityRow};
use stnface::detect::{detect_all, select_verdict_threshold, DetectOptions, Suppression};
use stnface::eval::{evaluate, Summary, MATCH_IOU};
use stnface::io::{parse_detections, read_corpus, read_netpbm, write_corpus, write_detections};
use stnface::model::{read_rpn, write_rpn, DetectorModel};
use stnface::train::{evaluate_rpn, train_end_to_end, train_prefilter, train_rpn};
use stnface::{generate_synthetic_corpus, DetectorConfig, SynthParams};
use stnface_core::fern::serial::{read_cascade, write_cascade};
use stnface_core::gradcheck::warp_chain_case;
use stnface_core::{BBox, Detection, Error, Result};

#[derive(Parser)]
#[command(name = "stnface", version, about = "Two-stage face detector with landmark-driven rectification and ROI convolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuppressionArg {
    NonTopK,
    Nms,
    NmsMatched,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus as PGM images with annotation sidecars.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Small single-face training images instead of test scenes.
        #[arg(long)]
        training: bool,
    },
    /// Train the fern pre-filter.
    TrainCascade {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train the proposal network.
    TrainRpn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train everything jointly, starting from a pre-trained proposal network.
    TrainE2e {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cascade: PathBuf,
        #[arg(long)]
        rpn: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Validation images for picking the verdict threshold.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        false_alarms: usize,
        /// CSV of canonical positions after every update.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Detect faces; prints `image,x,y,w,h,score,landmarks...` rows.
    Detect {
        #[arg(long)]
        model: PathBuf,
        /// Image files or directories of images.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        dense: bool,
        #[arg(long, value_enum, default_value = "non-top-k")]
        suppression: SuppressionArg,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detection rows against annotated images.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        false_alarms: usize,
    },
    /// Time one masked convolution layer against the dense one.
    BenchRoiconv {
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 16)]
        filters: usize,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.3,0.5,1.0")]
        sparsity: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Per-stage timings of the full detector over an image set.
    BenchPipeline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of the rectification gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<DetectorConfig> {
    path.as_deref().map_or_else(|| Ok(DetectorConfig::default()), DetectorConfig::load)
}

fn image_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm" | "pnm")))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn image_id(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn truth_of(data: &Path) -> Result<Vec<(String, Vec<BBox>)>> {
    let corpus = read_corpus(data)?;
    Ok(corpus
        .into_iter()
        .map(|s| (image_id(Path::new(&s.provenance)), s.faces.iter().map(|f| f.bbox).collect()))
        .collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { out, seed, count, training } => {
            let params = if training { SynthParams::training() } else { SynthParams::default() };
            write_corpus(&out, &generate_synthetic_corpus(seed, count, &params))?;
            println!("wrote {count} samples to {}", out.display());
        }
        Command::TrainCascade { data, config, out } => {
            let cfg = load_config(&config)?;
            let (cascade, report) = train_prefilter(&read_corpus(&data)?, &cfg)?;
            println!("stage,exp_loss,training_error,positive_retention");
            for i in 0..report.exp_loss.len() {
                println!("{i},{:.6},{:.6},{:.6}", report.exp_loss[i], report.training_error[i], report.positive_retention[i]);
            }
            write_cascade(&mut BufWriter::new(fs::File::create(&out)?), &cascade)?;
        }
        Command::TrainRpn { data, config, out } => {
            let cfg = load_config(&config)?;
            let corpus = read_corpus(&data)?;
            let (rpn, report) = train_rpn(&corpus, &cfg)?;
            println!("epoch,loss,balanced_accuracy,landmark_error_px");
            for e in &report.epochs {
                println!("{},{:.6},{:.4},{:.3}", e.epoch, e.loss, e.balanced_accuracy, e.landmark_error_px);
            }
            let mut w = BufWriter::new(fs::File::create(&out)?);
            write_rpn(&mut w, &rpn)?;
            w.flush()?;
        }
        Command::TrainE2e { data, cascade, rpn, config, out, val, false_alarms, trace } => {
            let cfg = load_config(&config)?;
            let corpus = read_corpus(&data)?;
            let cascade = read_cascade(&mut fs::File::open(&cascade)?)?;
            let rpn = read_rpn(&mut fs::File::open(&rpn)?)?;
            let (mut model, report) = train_end_to_end(&corpus, cascade, rpn, &cfg)?;
            println!("epoch,rpn_loss,verdict_loss,verdict_accuracy,landmark_error_px");
            for e in &report.epochs {
                println!("{},{:.6},{:.6},{:.4},{:.3}", e.epoch, e.rpn_loss, e.verdict_loss, e.verdict_accuracy, e.landmark_error_px);
            }
            println!("skipped singular candidates: {}", report.skipped_singular);
            if let Some(val) = val {
                let val = read_corpus(&val)?;
                let held = evaluate_rpn(&model.rpn, &val, cfg.lambda)?;
                println!("validation landmark error: {:.3} px", held.mean_point_error());
                model.verdict_threshold = select_verdict_threshold(&model, &val, false_alarms, &DetectOptions::default())?;
                println!("verdict threshold at {false_alarms} false alarms: {:.6}", model.verdict_threshold);
            }
            if let Some(trace) = trace {
                let mut w = BufWriter::new(fs::File::create(trace)?);
                writeln!(w, "step,point,x,y")?;
                for (i, snap) in report.canonical_trace.iter().enumerate() {
                    for (j, p) in snap.iter().enumerate() {
                        writeln!(w, "{i},{j},{:.6},{:.6}", p[0], p[1])?;
                    }
                }
            }
            model.save(&out)?;
        }
        Command::Detect { model, inputs, dense, suppression, k, threshold, workers, out } => {
            let model = DetectorModel::load(&model)?;
            let suppression = match suppression {
                SuppressionArg::NonTopK => Suppression::NonTopK { k },
                SuppressionArg::Nms => Suppression::Nms,
                SuppressionArg::NmsMatched => Suppression::NmsMatched { k },
            };
            let opts = DetectOptions { use_roi_conv: !dense, suppression, verdict_threshold: threshold, ..Default::default() };
            let paths = image_paths(&inputs)?;
            let images = paths.iter().map(|p| read_netpbm(p)).collect::<Result<Vec<_>>>()?;
            let results = detect_all(&images, &model, &opts, workers)?;
            let mut w: Box<dyn Write> = match out {
                Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            for (p, (dets, _)) in paths.iter().zip(&results) {
                write_detections(&mut w, &image_id(p), dets)?;
            }
            w.flush()?;
        }
        Command::Eval { detections, data, false_alarms } => {
            let rows = parse_detections(&fs::read_to_string(&detections)?)?;
            let truth = truth_of(&data)?;
            let mut per_image: Vec<Vec<Detection>> = vec![Vec::new(); truth.len()];
            for (id, d) in rows {
                let i = truth
                    .iter()
                    .position(|(t, _)| *t == id)
                    .ok_or_else(|| Error::Invalid(format!("detection for unknown image {id:?}")))?;
                per_image[i].push(d);
            }
            let boxes: Vec<Vec<BBox>> = truth.into_iter().map(|(_, b)| b).collect();
            print!("{}", evaluate(&per_image, &boxes, MATCH_IOU, false_alarms).render());
        }
        Command::BenchRoiconv { width, height, channels, filters, kernel, sparsity, reps } => {
            let b = ConvBench { width, height, in_channels: channels, out_channels: filters, kernel, reps, seed: 0 };
            let rows = bench_roiconv(&b, &sparsity)?;
            println!("{:>8} {:>10} {:>10} {:>10} {:>8}", "sparsity", "dense ms", "roi ms", "ratio", "ratio/s");
            for r in &rows {
                println!(
                    "{:>8.3} {:>10.2} {:>10.2} {:>10.3} {:>8.2}",
                    r.sparsity,
                    r.dense_s * 1e3,
                    r.roi_s * 1e3,
                    r.time_ratio(),
                    r.time_ratio() / r.sparsity
                );
            }
            println!("{}", SparsityRow::CSV_HEADER);
            rows.iter().for_each(|r| println!("{}", r.csv()));
        }
        Command::BenchPipeline { model, data } => {
            let model = DetectorModel::load(&model)?;
            let images: Vec<_> = read_corpus(&data)?.into_iter().map(|s| s.image).collect();
            let rows = bench_pipeline(&model, &images, &DetectOptions::default())?;
            let m = mean_row(&rows);
            println!("images: {}", rows.len());
            println!("mask sparsity: {:.1}%", 100.0 * m.sparsity);
            println!("pre-filter: {:.2} ms", m.prefilter_s * 1e3);
            println!("proposal network dense: {:.2} ms", m.rpn_dense_s * 1e3);
            println!("proposal network ROI: {:.2} ms ({:.1}%)", m.rpn_roi_s * 1e3, 100.0 * m.rpn_roi_s / m.rpn_dense_s);
            println!("verification: {:.2} ms", m.rcnn_s * 1e3);
            println!("total: {:.2} ms", m.total_s * 1e3);
            let s = Summary::of(&rows.iter().map(|r| r.total_s).collect::<Vec<_>>());
            println!("total per image: min {:.2} ms, max {:.2} ms", s.min * 1e3, s.max * 1e3);
            println!("{}", PipelineRow::CSV_HEADER);
            rows.iter().for_each(|r| println!("{}", r.csv()));
        }
        Command::Gradcheck { cases, step } => {
            println!("case,name,analytic,numeric,rel_err");
            let (mut done, mut seed, mut worst) = (0, 0u64, 0.0f64);
            while done < cases {
                if let Some(rows) = warp_chain_case(seed, step) {
                    for r in &rows {
                        worst = worst.max(r.rel_err());
                        println!("{seed},{},{:.9e},{:.9e},{:.3e}", r.name, r.analytic, r.numeric, r.rel_err());
                    }
                    done += 1;
                }
                seed += 1;
            }
            println!("# {cases} cases, worst relative error {worst:.3e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! The assembled detector and its model file.
//!
//! File layout: a WCNN record stream (sections 1 to 4: proposal network,
//! canonical shape plus settings, verification network, verdict head)
//! immediately followed by the WFRN pre-filter cascade.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use stnface_core::fern::serial::{read_cascade, write_cascade};
use stnface_core::fern::CascadeModel;
use stnface_core::nn::serial::{read_records, write_records, Record};
use stnface_core::nn::{concat_features, softmax, Dense};
use stnface_core::stn::{estimate_similarity, warp, CanonicalShape, LandmarkSet, Point, SimilarityTransform, RECTIFIED_SIZE};
use stnface_core::{BBox, Error, Result, Tensor};

use crate::config::{CanonicalInit, DetectorConfig};
use crate::rcnn::Rcnn;
use crate::rpn::{CellPrediction, Rpn};
use crate::synth::LAYOUT;

/// Face side in rectified pixels under the template canonical shape.
pub const TEMPLATE_SCALE: f64 = 40.0;
pub const RECT_CENTER: f64 = (RECTIFIED_SIZE as f64 - 1.0) / 2.0;

pub fn canonical_points(init: CanonicalInit) -> Vec<Point> {
    let (scale, shift) = match init {
        CanonicalInit::Template => (TEMPLATE_SCALE, [0.0, 0.0]),
        CanonicalInit::Large => (60.0, [0.0, 0.0]),
        CanonicalInit::Small => (24.0, [0.0, 0.0]),
        CanonicalInit::Offset => (TEMPLATE_SCALE, [8.0, 6.0]),
    };
    LAYOUT.iter().map(|p| [RECT_CENTER + scale * p[0] + shift[0], RECT_CENTER + scale * p[1] + shift[1]]).collect()
}

/// Canonical inter-ocular distance.
pub fn inter_ocular(c: &CanonicalShape) -> f64 {
    let p = c.points();
    ((p[1][0] - p[0][0]).powi(2) + (p[1][1] - p[0][1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub cascade: CascadeModel,
    pub rpn: Rpn,
    pub canonical: CanonicalShape,
    pub rcnn: Rcnn,
    pub verdict: Dense,
    /// When false the RPN slot of the verdict input is fed zeros.
    pub concat: bool,
    pub rpn_threshold: f64,
    pub verdict_threshold: f64,
}

/// A crop ready for verification.
pub struct Rectified {
    pub transform: SimilarityTransform,
    pub crop: Tensor<f64>,
}

impl DetectorModel {
    pub fn new<R: Rng>(cfg: &DetectorConfig, cascade: CascadeModel, rpn: Rpn, rng: &mut R) -> Result<Self> {
        let rcnn = Rcnn::new(cfg.rcnn_channels, cfg.rcnn_features, rng)?;
        let verdict = Dense::new(rpn.feature_len() + rcnn.feature_len(), 2, rng);
        let canonical = CanonicalShape::new(canonical_points(cfg.canonical_init), cfg.learn_canonical)?;
        let m = DetectorModel { cascade, rpn, canonical, rcnn, verdict, concat: cfg.concat, rpn_threshold: 0.5, verdict_threshold: 0.5 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.canonical.len() != 5 {
            return Err(Error::Invalid(format!("canonical shape has {} points, expected 5", self.canonical.len())));
        }
        if self.verdict.n_in != self.rpn.feature_len() + self.rcnn.feature_len() || self.verdict.n_out != 2 {
            return Err(Error::Invalid("verdict head does not match the concatenated feature length".into()));
        }
        Ok(())
    }

    /// Similarity used to rectify a proposal: fitted to the canonical shape
    /// from landmarks, or a fixed box-to-crop map for the box head.
    pub fn transform_for(&self, pred: &CellPrediction) -> Result<SimilarityTransform> {
        match &pred.landmarks {
            Some(lm) => estimate_similarity(&LandmarkSet::new(lm.to_vec())?, &self.canonical),
            None => box_transform(&pred.bbox),
        }
    }

    pub fn rectify(&self, source: &Tensor<f64>, pred: &CellPrediction) -> Result<Rectified> {
        let transform = self.transform_for(pred)?;
        let crop = warp(source, &transform, (RECTIFIED_SIZE, RECTIFIED_SIZE))?;
        Ok(Rectified { transform, crop })
    }

    pub fn verdict_input(&self, rpn_features: &[f64], rcnn_features: &[f64]) -> Vec<f64> {
        if self.concat {
            concat_features(rpn_features, rcnn_features)
        } else {
            concat_features(&vec![0.0; rpn_features.len()], rcnn_features)
        }
    }

    /// Face probability for a rectified crop.
    pub fn verify(&self, crop: &Tensor<f64>, rpn_features: &[f64]) -> Result<f64> {
        let f = self.rcnn.forward(crop)?;
        let logits = self.verdict.forward(&self.verdict_input(rpn_features, &f))?;
        Ok(softmax(&logits)?[1])
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let flags = vec![
            self.canonical.trainable as u8 as f64,
            self.rpn.landmarks as u8 as f64,
            self.concat as u8 as f64,
            self.rpn_threshold,
            self.verdict_threshold,
        ];
        let records = vec![
            Record::Section(1),
            Record::Conv(self.rpn.conv1.clone()),
            Record::Conv(self.rpn.conv2.clone()),
            Record::Conv(self.rpn.conv3.clone()),
            Record::Conv(self.rpn.head.clone()),
            Record::Section(2),
            Record::Points(self.canonical.points().to_vec()),
            Record::Values(flags),
            Record::Section(3),
            Record::Conv(self.rcnn.conv1.clone()),
            Record::Conv(self.rcnn.conv2.clone()),
            Record::Conv(self.rcnn.conv3.clone()),
            Record::Dense(self.rcnn.fc.clone()),
            Record::Section(4),
            Record::Dense(self.verdict.clone()),
        ];
        write_records(w, &records)?;
        write_cascade(w, &self.cascade)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let records = read_records(r)?;
        let bad = || Error::Format("model file sections are not in the expected layout".into());
        let mut it = records.into_iter();
        let mut next = || it.next().ok_or_else(bad);
        let conv = |n: &mut dyn FnMut() -> Result<Record>| match n()? {
            Record::Conv(c) => Ok(c),
            _ => Err(bad()),
        };
        let section = |r: Record, id: u32| if r == Record::Section(id) { Ok(()) } else { Err(bad()) };
        section(next()?, 1)?;
        let (c1, c2, c3, head) = (conv(&mut next)?, conv(&mut next)?, conv(&mut next)?, conv(&mut next)?);
        section(next()?, 2)?;
        let Record::Points(points) = next()? else { return Err(bad()) };
        let Record::Values(flags) = next()? else { return Err(bad()) };
        if flags.len() != 5 {
            return Err(bad());
        }
        section(next()?, 3)?;
        let (r1, r2, r3) = (conv(&mut next)?, conv(&mut next)?, conv(&mut next)?);
        let Record::Dense(fc) = next()? else { return Err(bad()) };
        section(next()?, 4)?;
        let Record::Dense(verdict) = next()? else { return Err(bad()) };
        let cascade = read_cascade(r)?;
        let landmarks = flags[1] != 0.0;
        if head.spec.out_channels != if landmarks { 12 } else { 5 } {
            return Err(bad());
        }
        let m = DetectorModel {
            cascade,
            rpn: Rpn { conv1: c1, conv2: c2, conv3: c3, head, landmarks },
            canonical: CanonicalShape::new(points, flags[0] != 0.0)?,
            rcnn: Rcnn { conv1: r1, conv2: r2, conv3: r3, fc },
            verdict,
            concat: flags[2] != 0.0,
            rpn_threshold: flags[3],
            verdict_threshold: flags[4],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Stand-alone proposal network file: WCNN section 1 only.
pub fn write_rpn<W: Write>(w: &mut W, rpn: &Rpn) -> Result<()> {
    let records = vec![
        Record::Section(1),
        Record::Conv(rpn.conv1.clone()),
        Record::Conv(rpn.conv2.clone()),
        Record::Conv(rpn.conv3.clone()),
        Record::Conv(rpn.head.clone()),
    ];
    write_records(w, &records)
}

pub fn read_rpn<R: Read>(r: &mut R) -> Result<Rpn> {
    let records = read_records(r)?;
    match <[Record; 5]>::try_from(records) {
        Ok([Record::Section(1), Record::Conv(conv1), Record::Conv(conv2), Record::Conv(conv3), Record::Conv(head)]) => {
            let landmarks = match head.spec.out_channels {
                12 => true,
                5 => false,
                n => return Err(Error::Format(format!("proposal head with {n} outputs"))),
            };
            Ok(Rpn { conv1, conv2, conv3, head, landmarks })
        }
        _ => Err(Error::Format("not a proposal network file".into())),
    }
}

/// Axis-aligned map placing a box of side `s` at [`TEMPLATE_SCALE`] pixels
/// in the crop centre.
pub fn box_transform(b: &BBox) -> Result<SimilarityTransform> {
    let (cx, cy) = b.center();
    SimilarityTransform::new(TEMPLATE_SCALE / b.size().max(1e-6), 0.0, [cx, cy], [RECT_CENTER, RECT_CENTER])
}

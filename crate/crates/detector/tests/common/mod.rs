#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stnface::model::DetectorModel;
use stnface::rpn::Rpn;
use stnface::DetectorConfig;
use stnface_core::fern::{train_cascade, CascadeModel, TrainConfig};
use stnface_core::image::GrayImage;

/// Two-fern cascade on a trivial left/right brightness task.
pub fn tiny_cascade() -> CascadeModel {
    let pos: Vec<GrayImage> = (0..6).map(|i| GrayImage::from_fn(32, 32, |x, _| if x < 16 { 200 } else { 20 + i })).collect();
    let neg: Vec<GrayImage> = (0..6).map(|i| GrayImage::from_fn(32, 32, |x, _| if x < 16 { 20 + i } else { 200 })).collect();
    let cfg = TrainConfig { num_ferns: 2, candidate_pool: 4, ..Default::default() };
    train_cascade(&pos, &neg, &cfg).unwrap().0
}

/// Untrained model with the given configuration.
pub fn random_model(cfg: &DetectorConfig, seed: u64) -> DetectorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rpn = Rpn::new(cfg.rpn_channels, cfg.landmarks, &mut rng).unwrap();
    DetectorModel::new(cfg, tiny_cascade(), rpn, &mut rng).unwrap()
}

//! Plain-text `key = value` configuration. Blank lines and `#` comments are
//! ignored; unknown keys are errors. Every field and its default:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | 0 | seed for initialisation and sampling |
//! | `rpn_channels` | 16,32,32 | RPN conv widths |
//! | `rcnn_channels` | 8,16,16 | RCNN conv widths |
//! | `rcnn_features` | 32 | RCNN fully connected width |
//! | `landmarks` | true | RPN regresses 5 landmarks (false: a box) |
//! | `learn_canonical` | true | update canonical positions end to end |
//! | `concat` | true | verdict sees RPN features as well as RCNN features |
//! | `canonical_init` | template | `template`, `large`, `small` or `offset` |
//! | `lambda` | 2.0 | landmark loss weight |
//! | `warp_weight` | 0.1 | weight of the verification gradient reaching the landmark head through the warp |
//! | `rpn_epochs` | 8 | RPN pre-training epochs |
//! | `e2e_epochs` | 3 | end-to-end epochs |
//! | `batch` | 4 | images per SGD step |
//! | `lr_rpn` | 0.01 | RPN pre-training learning rate |
//! | `lr_e2e` | 0.01 | end-to-end learning rate (verification stage) |
//! | `lr_e2e_rpn` | 0.001 | end-to-end learning rate of the proposal network |
//! | `lr_canonical` | 2.0 | canonical position learning rate |
//! | `momentum` | 0.9 | SGD momentum |
//! | `samples_per_image` | 2 | positives and negatives drawn per image |
//! | `negative_iou` | 0.5 | candidates below this IoU with every face are negatives |
//! | `cascade_ferns` | 12 | boosted ferns in the pre-filter |
//! | `cascade_pool` | 50 | random ferns tried per stage |
//! | `cascade_target` | 0.999 | per-stage positive retention |
//! | `cascade_negatives` | 4 | negative windows sampled per image |

use std::path::Path;

use stnface_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalInit {
    Template,
    Large,
    Small,
    Offset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub seed: u64,
    pub rpn_channels: [usize; 3],
    pub rcnn_channels: [usize; 3],
    pub rcnn_features: usize,
    pub landmarks: bool,
    pub learn_canonical: bool,
    pub concat: bool,
    pub canonical_init: CanonicalInit,
    pub lambda: f64,
    pub warp_weight: f64,
    pub rpn_epochs: usize,
    pub e2e_epochs: usize,
    pub batch: usize,
    pub lr_rpn: f64,
    pub lr_e2e: f64,
    pub lr_e2e_rpn: f64,
    pub lr_canonical: f64,
    pub momentum: f64,
    pub samples_per_image: usize,
    pub negative_iou: f64,
    pub cascade_ferns: usize,
    pub cascade_pool: usize,
    pub cascade_target: f64,
    pub cascade_negatives: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            seed: 0,
            rpn_channels: [16, 32, 32],
            rcnn_channels: [8, 16, 16],
            rcnn_features: 32,
            landmarks: true,
            learn_canonical: true,
            concat: true,
            canonical_init: CanonicalInit::Template,
            lambda: 2.0,
            warp_weight: 0.1,
            rpn_epochs: 8,
            e2e_epochs: 3,
            batch: 4,
            lr_rpn: 0.01,
            lr_e2e: 0.01,
            lr_e2e_rpn: 0.001,
            lr_canonical: 2.0,
            momentum: 0.9,
            samples_per_image: 2,
            negative_iou: 0.5,
            cascade_ferns: 12,
            cascade_pool: 50,
            cascade_target: 0.999,
            cascade_negatives: 4,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Invalid(format!("{key}: cannot parse {v:?}")))
}

fn triple(key: &str, v: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = v.split(',').map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
    parts.try_into().map_err(|_| Error::Invalid(format!("{key}: expected three comma-separated widths")))
}

impl DetectorConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "rpn_channels" => self.rpn_channels = triple(key, v)?,
            "rcnn_channels" => self.rcnn_channels = triple(key, v)?,
            "rcnn_features" => self.rcnn_features = parse(key, v)?,
            "landmarks" => self.landmarks = parse(key, v)?,
            "learn_canonical" => self.learn_canonical = parse(key, v)?,
            "concat" => self.concat = parse(key, v)?,
            "canonical_init" => {
                self.canonical_init = match v {
                    "template" => CanonicalInit::Template,
                    "large" => CanonicalInit::Large,
                    "small" => CanonicalInit::Small,
                    "offset" => CanonicalInit::Offset,
                    _ => return Err(Error::Invalid(format!("canonical_init: unknown {v:?}"))),
                }
            }
            "lambda" => self.lambda = parse(key, v)?,
            "warp_weight" => self.warp_weight = parse(key, v)?,
            "rpn_epochs" => self.rpn_epochs = parse(key, v)?,
            "e2e_epochs" => self.e2e_epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "lr_rpn" => self.lr_rpn = parse(key, v)?,
            "lr_e2e" => self.lr_e2e = parse(key, v)?,
            "lr_e2e_rpn" => self.lr_e2e_rpn = parse(key, v)?,
            "lr_canonical" => self.lr_canonical = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "samples_per_image" => self.samples_per_image = parse(key, v)?,
            "negative_iou" => self.negative_iou = parse(key, v)?,
            "cascade_ferns" => self.cascade_ferns = parse(key, v)?,
            "cascade_pool" => self.cascade_pool = parse(key, v)?,
            "cascade_target" => self.cascade_target = parse(key, v)?,
            "cascade_negatives" => self.cascade_negatives = parse(key, v)?,
            _ => return Err(Error::Invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = DetectorConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if cfg.batch == 0 {
            return Err(Error::Invalid("batch must be positive".into()));
        }
        if !(cfg.negative_iou > 0.0 && cfg.negative_iou <= 0.5) {
            return Err(Error::Invalid("negative_iou must lie in (0, 0.5]".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_rejects_unknown() {
        let cfg = DetectorConfig::parse_str("# run\nseed = 7\nrpn_channels = 4, 8, 8\nconcat=false\ncanonical_init = small\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.rpn_channels, [4, 8, 8]);
        assert!(!cfg.concat);
        assert_eq!(cfg.canonical_init, CanonicalInit::Small);
        assert!(DetectorConfig::parse_str("nope = 1").is_err());
        assert!(DetectorConfig::parse_str("seed").is_err());
        assert!(DetectorConfig::parse_str("rpn_channels = 1,2").is_err());
        assert!(DetectorConfig::parse_str("negative_iou = 0.7").is_err());
        assert_eq!(DetectorConfig::parse_str("negative_iou = 0.3").unwrap().negative_iou, 0.3);
    }
}

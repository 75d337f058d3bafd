//! Building blocks for a two-stage, landmark-warped face detector.
//!
//! - [`tensor`] and [`nn`]: a small deterministic CPU tensor kernel with
//!   hand-written forward and backward passes.
//! - [`stn`]: closed-form similarity estimation from landmarks, bilinear
//!   warping into a canonical frame, and gradients for every input of the warp.
//! - [`roi`]: mask-driven convolution that only evaluates patches inside a
//!   region-of-interest mask, plus the mask/pyramid bookkeeping around it.
//! - [`fern`]: boosted pixel-difference ferns used as a soft-cascade pre-filter.
//! - [`suppression`]: IoU, greedy NMS and Non-top-K suppression.

pub mod detection;
pub mod error;
pub mod fern;
pub mod gradcheck;
pub mod image;
pub mod nn;
pub mod roi;
pub mod stn;
pub mod suppression;
pub mod tensor;

pub use detection::{BBox, Detection};
pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

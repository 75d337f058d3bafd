//! ROI convolution: evaluate a network only where a binary mask says a face
//! may be, and keep the bookkeeping (scale groups, mask pyramids, receptive
//! fields) that decides where that is.

pub mod conv;
pub mod group;
pub mod mask;
pub mod pyramid;
pub mod rf;

pub use conv::{roi_conv_forward, roi_conv_forward_with_bias, roi_im2col, roi_maxpool2x2, RoiConvOutput};
pub use group::{build_mask, group_candidates, ScaleGroup, MIN_FACE};
pub use mask::RoiMask;
pub use pyramid::{build_roi_pyramid, geometric_overhead, pyramid_overhead, PyramidLevel, RoiPyramid};
pub use rf::{receptive_field, LayerRfSpec, RfKind};

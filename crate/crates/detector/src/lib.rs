//! Two-stage face detector: a fern cascade proposes windows, a small
//! convolutional network scores cells and regresses five landmarks inside
//! masked regions, each proposal is rectified by a landmark-fitted
//! similarity onto learnable canonical positions, and a second network
//! verifies the crop using its own features together with the proposal
//! network's.

pub mod bench;
pub mod config;
pub mod detect;
pub mod eval;
pub mod io;
pub mod model;
pub mod rcnn;
pub mod rpn;
pub mod synth;
pub mod train;

pub use config::DetectorConfig;
pub use detect::{detect, DetectOptions, Suppression};
pub use model::DetectorModel;
pub use synth::{generate_synthetic_corpus, AnnotatedSample, SynthParams};

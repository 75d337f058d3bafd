//! Minimal CPU neural-network kernel with hand-coded backward passes.

pub mod activation;
pub mod concat;
pub mod conv;
pub mod dense;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod pool;
pub mod serial;

pub use activation::{relu, relu_backward};
pub use concat::{concat_backward, concat_features};
pub use conv::{conv2d_backward, conv2d_forward, im2col, ConvSpec};
pub use dense::{fully_connected, fully_connected_backward};
pub use layers::{Conv2d, ConvCache, Dense, Layer};
pub use loss::{mse, softmax, softmax_cross_entropy, MultiTaskLoss};
pub use optim::{sgd_step, Sgd};
pub use pool::{maxpool2x2, maxpool_backward, Pooled};

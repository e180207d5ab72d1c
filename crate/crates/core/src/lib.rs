//! Three-lead ECG classification engine.
//!
//! Three depthwise-separable 1D SE-ResNet backbones (one per lead) feed a
//! lead-wise attention module that scores each lead and merges the lead
//! features into a single embedding for the classifier. The crate covers the
//! whole lifecycle of such a model:
//!
//! * [`ops`]: forward/backward primitives and a finite-difference checker
//! * [`model`]: backbones, attention merge, classifier and prediction
//! * [`data`]: record files, preprocessing to `3 x 5000`, synthetic datasets
//! * [`training`]: Adam, cosine schedule, DropLead, stratified k-fold, metrics
//! * [`explain`]: lead-wise Grad-CAM and the classifier randomization check
//! * [`compress`]: global magnitude pruning, checkpoints, parameter/FLOP stats
//! * [`cli`]: the `leadwise` command surface
//!
//! Runnable walkthroughs for each capability live under `examples/`.

pub mod cli;
pub mod compress;
pub mod data;
pub mod error;
pub mod explain;
pub mod model;
pub mod ops;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::Stream;
pub use tensor::Tensor3;

/// Whether an operation runs with training behaviour (batch statistics,
/// dropout, augmentation) or deterministic inference behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

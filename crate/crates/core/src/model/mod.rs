//! Model assembly: backbones, attention merge, classifier, predictions.

pub mod attention;
pub mod backbone;
pub mod config;
pub mod layers;
pub mod net;
pub mod params;
pub mod predict;

pub use attention::LeadAttention;
pub use backbone::{Backbone, ResBlock, SqueezeExcite};
pub use config::{BackboneConfig, ModelConfig, StageConfig, Task, INPUT_LEADS, INPUT_LENGTH};
pub use net::{ForwardOutput, LeadwiseNet};
pub use params::{ParamKind, ParamMut, ParamRef, Parameterized};
pub use predict::{argmax, predict, probabilities};

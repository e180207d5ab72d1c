//! Primitive layers with explicit forward and backward passes.
//!
//! Every op is a pure function of its inputs, parameters, mode and random
//! stream. Backward functions return fresh gradients; accumulation into
//! parameter stores happens in [`crate::model`].

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dropout;
pub mod gradcheck;
pub mod instrument;
pub mod linear;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax_rows};
pub use batchnorm::{batchnorm1d, batchnorm1d_backward, BatchNormState, BnCache};
pub use conv::{conv1d_backward, conv1d_forward, dsconv1d, ConvGrads, ConvParams};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{grad_check, grad_check_coords, GradCheck};
pub use linear::{fully_connected, fully_connected_backward, LinearGrads, LinearParams};
pub use loss::{binary_cross_entropy, cross_entropy};
pub use pool::{global_avg_pool, global_avg_pool_backward, max_pool, max_pool_backward};

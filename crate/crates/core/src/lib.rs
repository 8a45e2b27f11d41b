//! Noise-reducing convolutional autoencoder feeding a dual patch-scale vision
//! transformer whose branches exchange information through their CLS tokens,
//! topped by a residual classifier head.
//!
//! Everything runs on the small reverse-mode autodiff engine in [`tape`] and
//! [`ops`]; there is no external tensor library.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod head;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod nrca;
pub mod ops;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use config::{DataConfig, RunConfig};
pub use error::{Error, Result};
pub use gradcheck::{grad_check, grad_check_many, GradCheckOptions, GradCheckResult, WorstCoord};
pub use model::{FcflModel, ModelConfig};
pub use scalar::Scalar;
pub use tape::{BackwardRule, Tape, Var};
pub use tensor::Tensor;

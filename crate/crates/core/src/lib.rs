//! Mixture-of-views classification.
//!
//! Per-view expert networks are combined by a gating network that looks at
//! all views at once and decides, per sample, how much each view's decision
//! should count. The crate also carries the fusion baselines the model is
//! compared against (single view, decision averaging, feature
//! concatenation), the training loop, the cross-validation harness and the
//! ROC/AUC/DeLong statistics used to compare them.
//!
//! Everything here is pure computation over in-memory values. File formats,
//! threading and the command-line runner live in the `mov` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod mov;
pub mod nn;
pub mod rng;
pub mod train;

pub use baselines::{Model, ModelKind};
pub use error::{Error, ErrorCategory, Result};
pub use data::{Dataset, MultiViewSample, ViewSchema};
pub use mov::{MovParams, MovPrediction};
pub use nn::{MlpParams, Parameters};
pub use train::{TrainConfig, TrainHistory};

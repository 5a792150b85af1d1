//! Registration of plenoptic camera views against each other and against
//! motion-capture ground truth.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cli;
pub mod error;
pub mod features;
pub mod groundtruth;
pub mod metrics;
pub mod mla;
pub mod pnp;
mod ransac;
pub mod ransac3d;
pub mod se3;
pub mod synth;

pub use error::{Error, Result, Stage};

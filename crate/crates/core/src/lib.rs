//! Adversarial-input defense for 2D segmentation models.
//!
//! Inputs are scored by how badly a reconstruction network trained on clean
//! data reproduces their (shifted) log-magnitude spectrum; inputs that pass
//! are pushed back toward the clean manifold by a spatial reformer before
//! reaching the target segmenter.

pub mod attacks;
pub mod data;
pub mod detector;
pub mod error;
pub mod frequency;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod parallel;
pub mod pipeline;
pub mod reformer;
pub mod synthetic;

pub use error::{Error, Result};

//! Video denoising with a non-local patch-search layer feeding a residual
//! CNN.
//!
//! The pipeline, frame by frame: [`search`] finds for every pixel its best
//! matching patches in a spatio-temporal window, [`features`] stacks the
//! center values of those patches as channels, and [`network`] predicts the
//! noise from that stack. [`train`] fits the network on synthetic or
//! user-provided clips and [`metrics`] scores the results.

pub mod bench;
pub mod denoise;
pub mod error;
pub mod features;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod rng;
pub mod search;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use video::{PixelPos, Video};

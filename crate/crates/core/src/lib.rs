//! Terrain extension for lidar scans.
//!
//! A scan taken near a corner or intersection leaves the road behind the
//! corner unobserved. This crate predicts those missing traversable-terrain
//! points and concatenates them with the input scan:
//!
//! 1. [`cloud`] — point cloud / voxel grid types and file formats.
//! 2. [`sampling`] — furthest point sampling and exact k-NN queries.
//! 3. [`dataset`] — training-sample construction: road isolation, the
//!    buffered target set, bird's-eye-view masks, synthetic scenes.
//! 4. [`objective`] — chamfer-style losses with the outside-mask penalty,
//!    plus evaluation metrics and report assembly.
//! 5. [`model`] — the point-proxy transformer, reverse-mode gradients,
//!    Adam training loop and checkpoints.

pub mod cloud;
pub mod dataset;
mod error;
pub mod model;
pub mod objective;
pub mod sampling;

pub use error::{Error, Result};

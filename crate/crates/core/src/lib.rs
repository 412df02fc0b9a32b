//! Complexity-driven adaptive voxelization of point clouds.
//!
//! A normalized cloud is binned into a fixed `R³` grid, every occupied cell
//! is scored with seven geometric complexity measures, cells are labeled
//! complex by per-metric percentile thresholds, and non-complex regions are
//! merged bottom-up into a multi-level pyramid. [`evaluation`] scores the
//! result against the input and times it against the fixed-resolution
//! baseline; [`tap_lme`] implements the attention pooling used to summarize
//! token sequences.

pub mod cli;
pub mod complexity;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod geometry;
pub mod pointcloud;
pub mod pyramid;
pub mod spatial;
pub mod tap_lme;
pub mod voxel_grid;

pub use error::{Error, Result};

//! Core algorithms for multi-representation LiDAR learning.
//!
//! Everything in this crate is a pure function of its inputs and explicit
//! seeds, and it builds without `std` (only `alloc` is required):
//!
//! - [`datagen`]: synthetic scenes, ray-cast LiDAR scans, camera class images,
//!   augmentation and corruption.
//! - [`geometry`]: range-view projection, sparse voxelization, camera
//!   calibration, superpoints and feature alignment back to point space.
//! - [`nn`]: a small reverse-mode differentiation engine with the primitives
//!   the encoders and losses need, AdamW with a one-cycle schedule and a
//!   finite-difference gradient checker.
//! - [`encoders`]: miniature range, voxel and point backbones plus the frozen
//!   synthetic image teacher.
//! - [`moe`]: noisy gated fusion of the three representations, for features
//!   and for semantic logits.
//! - [`losses`]: superpoint contrastive loss, cross-entropy, Lovász-softmax and
//!   the semantic mixture objective.
//! - [`metrics`]: IoU, corruption error / resilience rate, expert-loading
//!   tables and cosine-similarity maps.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datagen;
pub mod encoders;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod moe;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Point, PointCloud};
pub use nn::{Graph, ParameterStore, Real, Tensor, Var};

/// Number of semantic classes in the synthetic palette.
pub const NUM_CLASSES: usize = 6;

/// Label value marking a point, cell or pixel without supervision.
pub const IGNORE_LABEL: i32 = -1;

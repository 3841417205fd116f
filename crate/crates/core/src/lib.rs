//! Render-feedback 6-DOF rigid object tracking.
//!
//! A two-branch convolutional network sees the object rendered at the current
//! pose estimate next to the observed RGBD frame and regresses the corrective
//! pose delta. This crate contains every stage of that pipeline:
//!
//! - [`pose`]: rigid poses, training-pair sampling, label codec, error metrics
//! - [`raster`]: software RGBD renderer and compositing
//! - [`datagen`]: synthetic training pairs, augmentation, normalization, datasets
//! - [`nn`]: the network, hand-written backpropagation and ADAM training
//! - [`tracker`]: the closed tracking loop
//! - [`bench`]: synthetic sequences and benchmark protocols
//! - [`cli`]: configuration and subcommands of the `dt6d` binary

// `!(x > 0.0)` is deliberate throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod datagen;
mod error;
pub mod geom;
pub mod nn;
pub mod pose;
pub mod raster;
pub mod rng;
pub mod tracker;

pub use error::{Error, Result};

//! Point-to-mask generation for infrared small targets.
//!
//! A single clicked point is grown into a compact mask by greedy region
//! growth that records an energy per step and keeps the best prefix. Around
//! that engine sit the raster and mask models, evaluation metrics, a
//! synthetic scene generator, the detectability-boundary model and the
//! experiment harnesses built on them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod boundary;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod mask;
pub mod metrics;
pub mod pamg;
pub mod par;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
pub use mask::{Connectivity, GeomSupervision, Mask};
pub use pamg::{backtrack_mask, energy, generate_mask, grow, guided_mask, GrowthTrace, PamgConfig, Variant};
pub use par::Execution;
pub use raster::{load_raster, Normalization, PixelCoord, Raster};

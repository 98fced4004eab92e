//! Sparse-view surface reconstruction with 2D Gaussian surfels.
//!
//! The crate is `no_std` (with `alloc`) so the numerical pipeline can be
//! embedded anywhere; file formats, the CLI and other IO live in the
//! companion `splatfit` crate. Enable `parallel` to render rows with rayon
//! (results stay bit-identical to the sequential path).
//!
//! Pipeline overview:
//! - [`geometry`]: pinhole cameras, rays, projection.
//! - [`splat`]: the surfel primitive and ray/surfel intersection.
//! - [`render`]: front-to-back compositing and its reverse pass.
//! - [`losses`]: photometric, depth-ranking, smoothing, feature, distortion
//!   and normal objectives.
//! - [`features`]: hand-crafted multi-level descriptor maps.
//! - [`synth`]: SDF scenes, monocular depth surrogate, initialization.
//! - [`optim`]: Adam, the training loop, finite-difference checking.
//! - [`fusion`]: TSDF integration, marching cubes, evaluation metrics.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
// `!(x > y)` rejects NaN along with the failing comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod features;
pub mod fusion;
pub mod gates;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod math;
pub mod optim;
mod par;
pub mod render;
pub mod rng;
pub mod spatial;
pub mod splat;
pub mod synth;

pub use geometry::{Camera, GeometryError, Intrinsics, Ray};
pub use nalgebra;
pub use image::{Image, Rgb};
pub use splat::{Splat, SplatHit, SplatSet};

/// Scalar type used throughout the pipeline.
pub type Real = f64;
/// World-space 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Continuous pixel coordinate (x to the right, y down).
pub type Vec2 = nalgebra::Vector2<f64>;

//! Dense surface normals from rectified stereo disparity maps.
//!
//! The core estimator fits the two free parameters `(a1, a2)` of the local
//! affine map between the left and right images to the disparities around
//! each pixel, then turns them into a normal with a closed-form cross product.
//!
//! - [`geometry`]: rectified camera model, triangulation, normal <-> affine parameters.
//! - [`kernel`]: precomputed least-squares kernels and the convolutional estimator.
//! - [`adaptive`]: star-shaped supports that stop at depth discontinuities.
//! - [`baselines`]: PCA plane fitting and the cross-product estimator.
//! - [`synth`]: raycast ground truth and seeded disparity noise.
//! - [`eval`]: angular error maps and summary statistics.
//! - [`io`]: PFM, 16-bit PNG, PLY, normal-map PNG and JSON stats.
//! - [`timing`]: frametime statistics for repeated estimator runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod io;
pub mod kernel;
pub mod method;
pub mod synth;
pub mod timing;

pub use error::{Error, Result};
pub use field::{AffineField, Field, NormalField, ScalarField};
pub use geometry::StereoRig;
pub use method::Method;

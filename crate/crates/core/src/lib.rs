//! Generalized minimal geodesics along volume-preserving maps of planar
//! domains.
//!
//! A path of maps is discretized as a chain of piecewise-constant maps on an
//! equal-area partition. Its action is penalized by the squared distance of
//! each intermediate map to the volume-preserving maps, which equals the
//! semi-discrete optimal transport cost from the map's image points to the
//! uniform measure. The chain is minimized with L-BFGS, and the result is
//! read as a generalized flow made of piecewise-linear particle paths.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod domain;
pub mod energy;
pub mod error;
pub mod flows;
pub mod geom2d;
pub mod optimizer;
pub mod render;
pub mod run;
pub mod sdot;

pub use error::{Error, Result};
pub use geom2d::Vec2;

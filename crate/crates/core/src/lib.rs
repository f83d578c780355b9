//! Random divergence-free rotation fields in the plane and their exact flows.
//!
//! Every elementary field in this crate has the form
//! `u(x) = A · m · g(|x − c| / L) · (x − c)^⊥`: an azimuthal field whose angular
//! speed depends only on the distance to its center. Its flow is a
//! radius-dependent rotation, so trajectories are computed exactly instead of
//! by time stepping. The crate builds three such families (a stretching field,
//! rotations on small balls, a rotation on an annulus), schedules random
//! copies of them in time, and measures how the moments of pair separations
//! grow under the resulting flow.
//!
//! The crate is `no_std` and only needs `alloc`. Parallel drivers, file
//! formats and the command line live in the `irregflow` crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` style checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_clamp)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod covering;
pub mod error;
pub mod fields;
pub mod flow;
pub mod geometry;
pub mod params;
pub mod rng;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
pub use geometry::Vec2;
pub use params::{Params, ParamsBuilder, SeparationBudget};

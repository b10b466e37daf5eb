//! Numerical toolkit for random sequences in the polydisc and the ball:
//! reproducing kernels, pseudo-hyperbolic geometry, Gram and frame operators,
//! occupancy statistics, separation tests and one-box Carleson checks.

pub mod carleson_disc;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod gramian;
pub mod separation;
pub mod occupancy;
pub mod sequence;
mod nufft;

pub use error::{Error, Result};

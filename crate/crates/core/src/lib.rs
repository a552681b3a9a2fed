//! Detection of abrupt changes in the scaling behaviour of a sampled
//! Gaussian path.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`wavelet`] turns a path into wavelet coefficients over a grid of scales.
//! 2. [`scalogram`] aggregates squared coefficients into per-segment
//!    log-variance vectors and the least-squares cost of fitting a line in
//!    log-log coordinates.
//! 3. [`segment`] minimises the summed cost over change-point
//!    configurations by dynamic programming and shrinks the resulting
//!    segments away from the estimated boundaries.
//! 4. [`estimate`] fits the scaling exponent on each shrunk segment by
//!    ordinary or feasible generalised least squares, with asymptotic
//!    covariances from [`gamma`] and a chi-square goodness-of-fit statistic.
//!
//! [`synth`] generates piecewise processes with known change points, and
//! [`montecarlo`] repeats simulate-and-estimate for replicate studies.

pub mod error;
pub mod estimate;
pub mod gamma;
pub mod montecarlo;
mod par;
pub mod pipeline;
pub mod quad;
pub mod rng;
pub mod scalogram;
pub mod segment;
pub mod stats;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};

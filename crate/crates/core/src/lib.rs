//! Joint power and CPU-frequency allocation for a massive-MIMO base station
//! that serves a federated-learning (FL) user group and an ordinary downlink
//! (non-FL) user group in the same time-frequency resource.
//!
//! The crate is layered bottom-up:
//!
//! - [`scenario`]: network drops (geometry, large-scale fading, SNR normalization)
//!   and the flat key/value configuration file.
//! - [`link`]: closed-form MMSE variances, effective SINRs, rates, step
//!   durations and data volumes, plus the self-interference sampling oracle.
//! - [`bounds`]: the three tangent inequalities and the per-rate concave lower /
//!   convex upper bound structures built from them.
//! - [`conic`]: a small canonical conic-program representation (linear, second
//!   order and rotated second order cones) and its solver backend.
//! - [`subproblem`]: assembly of one successive-convex-approximation step.
//! - [`algorithms`]: the iteration drivers for the half-duplex, full-duplex and
//!   FDMA schemes, the equal-power baseline and the hybrid selector.
//! - [`harness`]: Monte-Carlo sweeps, aggregation and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod algorithms;
pub mod bounds;
pub mod conic;
pub mod error;
pub mod harness;
pub mod layout;
pub mod link;
pub mod scenario;
pub mod subproblem;

pub use error::{Error, Result};

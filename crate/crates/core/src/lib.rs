//! embedlab: a numerical laboratory for random linear maps with
//! log-Lipschitz inverses on homogeneous subsets of normed spaces.
//!
//! The tooling follows one storyline: measure how homogeneous a finite set
//! is ([`covering`]), build orthogonal or norming-functional chains along
//! its dyadic layers ([`chain`]), draw random maps whose rows decay down
//! the chain ([`probe`]), and confirm that such maps are injective with an
//! inverse continuous up to a power of a logarithm ([`distortion`]) — with
//! the failure probabilities per layer summing like a convergent series.
//! The [`cube_slice`] module provides the sharp cube-section volume bounds
//! (Ball's theorem) that calibrate the small-ball estimates, via three
//! independent routes: exact piecewise polynomials, oscillatory quadrature,
//! and Monte Carlo.
//!
//! Everything is deterministic: fixed seeds give byte-identical artifacts
//! regardless of thread count.

// Validation guards are written as `!(x > 0.0)` on purpose: the negated
// form also rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod covering;
pub mod cube_slice;
pub mod distortion;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod geometry;
pub mod linalg;
pub mod probe;
pub mod rng;
mod serde_util;
pub mod stats;
pub mod svg;

pub use error::{EmbedError, ErrorClass, Result};

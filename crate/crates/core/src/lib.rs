//! Recovery of the Levi-Civita connection of an embedded manifold from the
//! small-time behaviour of the stochastic flow generated by Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: projector fields `P(x)` of embedded manifolds and the
//!   quantities built from them (`S`, the Itô drift `r`, Christoffel symbols).
//! - [`curves`]: discretised curves on the manifold and line-integral
//!   quadrature.
//! - [`flow`]: the Stratonovich flow `dY = P(Y) ∘ dW` driven by a
//!   counter-based Brownian source, transporting whole curves with one noise
//!   path.
//! - [`estimators`]: Monte Carlo and deterministic estimators of the expected
//!   projected-area functional, its time derivative, the small-time drift and
//!   the assembled connection identity.
//!
//! The crate is `no_std` (with `alloc`). The `parallel` feature distributes
//! Monte Carlo paths over a rayon pool; results do not depend on the number
//! of worker threads.
//!
//! Indices in this API are zero-based.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod curves;
pub mod error;
pub mod estimators;
pub mod flow;
pub mod geometry;
pub mod linalg;
mod parallel;
mod stats;

pub use curves::{Curve, CurveSpec, OneForm};
pub use error::Error;
pub use flow::{BrownianDriver, FlowConfig, Scheme};
pub use geometry::{
    AmbientPoint, ChristoffelTensor, DerivativeMode, ManifoldModel, Shape, ShapeKind,
};
pub use linalg::{Matrix, Tensor3};

/// Largest ambient dimension supported by the stack-allocated hot paths.
pub const MAX_DIM: usize = 8;

pub type Result<T, E = Error> = core::result::Result<T, E>;

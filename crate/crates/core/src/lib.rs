#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Meshless differential operators on scattered point clouds.
//!
//! Stencil weights come from a constrained least-squares fit over radial
//! kernels centered at *ghost* sample points (points placed around the
//! stencil center independently of the data) plus a polynomial basis without
//! the constant term. The fit is forced through the center value, so the
//! Laplacian estimate at `x0` takes the difference form
//! `sum_i w_i (u(x_i) - u(x0))`.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: point clouds, k-nearest-neighbor search, center-relative
//!   neighborhoods.
//! - [`kernels`]: radial kernels `f(c r^2)` and monomial bases.
//! - [`ghosts`]: ghost sample point placement.
//! - [`linalg`]: SVD pseudoinverse solves with rank reporting.
//! - [`stencil`]: CLS-GSP, LS-GSP and RBF-FD weight generation.
//! - [`assembly`]: global differential matrices and Poisson solves.
//! - [`surface`]: surface sampling, tangent frames and Laplace-Beltrami
//!   matrices.
//! - [`spectral`]: eigenvalues, consistency studies and shape sweeps.
//! - [`experiments`]: configuration and artifact writing for the CLI.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod functions;
pub mod geometry;
pub mod ghosts;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod spectral;
pub mod stencil;
pub mod surface;

pub use error::{Error, Result};

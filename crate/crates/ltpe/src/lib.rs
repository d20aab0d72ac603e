//! Numerical integration of semi-linear stochastic differential equations
//! with super-linearly growing coefficients, built around a projected
//! theta-method whose invariant measure stays within `O(h)` of the exact
//! dynamics' one.
//!
//! The pieces, bottom up:
//!
//! - [`rng`]: counter-based Gaussian streams; any increment is addressable
//!   by `(seed, trajectory, step, component)` with no sequential state.
//! - [`model`]: semi-linear drift splits `A x + f(x)`, diffusion columns,
//!   and empirically fitted assumption constants.
//! - [`linop`]: structured application and shifted solves of the linear
//!   part, `(I - theta h A) y = b`.
//! - [`paths`]: Brownian increments on dyadic grids with bit-exact
//!   coarsening, the coupling contract for weak-error references.
//! - [`scheme`]: the projected theta step, the Euler-Maruyama baseline,
//!   and the step-size admissibility calculus.
//! - [`estimate`]: ensemble expectations, weak-error sweeps, rate fits,
//!   ergodic averages, and empirical densities.
//! - [`verify`]: empirical checks of the structural claims behind the
//!   scheme (moment bounds, contractivity, projection error, time
//!   regularity of the piecewise interpolant).
//! - [`config`], [`output`], [`svg`], [`cli`]: experiment orchestration
//!   and reporting.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimate;
pub mod linop;
pub mod model;
pub mod output;
pub mod paths;
pub mod rng;
pub mod scheme;
pub mod svg;
pub mod verify;

pub use error::{Error, Result};

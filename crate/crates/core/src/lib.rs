//! Numerical laboratory for quasilinear stochastic PDEs with two reflecting
//! obstacles and their doubly reflected backward doubly stochastic
//! differential equation (DRBDSDE) representation.
//!
//! The crate is organized bottom-up:
//!
//! - [`dsl`]: the coefficient expression language used by problem files.
//! - [`model`]: problem, grid and noise types plus hypothesis checks.
//! - [`config`]: the sectioned problem file and the bundled instances.
//! - [`grid`]: pathwise backward finite-difference solver (free, projected
//!   and penalized modes).
//! - [`picard`]: contraction constants and the fixed-point iteration for
//!   coefficients depending on `(u, ∇u)`.
//! - [`lattice`]: random-walk lattice solver for the backward equation and
//!   Monte Carlo estimators over walk paths.
//! - [`validation`]: executable checks (comparison, penalization, Itô
//!   residual, separability, Lipschitz spot checks) and the suite runner.

pub mod config;
pub mod dsl;
pub mod grid;
pub mod lattice;
pub mod model;
pub mod picard;
pub mod validation;

//! Nonlinear Gaussian state estimation with exact polynomial moments.
//!
//! The centrepiece is a closed-form expectation of any multivariate polynomial
//! under a Gaussian density, computed from the eigen-decomposition of the
//! covariance, a multinomial expansion, and the odd/even rule for 1-D Gaussian
//! moments. Those expectations drive a Rauch–Tung–Striebel forward/backward
//! smoother, alongside cubature, unscented and first-order linearized
//! baselines that share the same moment interface.
//!
//! The [`experiment`] module ties everything into a Monte Carlo RMSE harness
//! (parallel over runs with the `parallel` feature, serial otherwise) whose
//! reference scenario is a forced Van der Pol oscillator with polynomial
//! dynamics.

pub mod config;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod polynomial;
pub mod quadrature;
pub mod report;
mod rng;
pub mod smoother;
pub mod strategies;

pub use error::{Error, Result};
pub use linalg::{GaussianBelief, SpectralDecomposition};
pub use polynomial::{Monomial, Polynomial, PolynomialMap};

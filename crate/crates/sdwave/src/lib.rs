//! Spectral-Galerkin simulator and numerical verification toolkit for the
//! two-dimensional strongly damped wave equation
//!
//!   w_tt - lap w_t + f(w_t) - lap w + g(w) = h
//!
//! on a rectangle with homogeneous Dirichlet data, for damping and source
//! terms that may grow exponentially. Alongside the integrator the crate
//! verifies the quantitative structure of the problem at desk scale: the
//! energy balance, the Lyapunov descent, the heat-equation decomposition
//! with its sup-norm bounds, and dissipativity of the generated semigroup.

pub mod config;
pub mod decomp;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod longtime;
pub mod nonlin;
pub mod quad;
pub mod report;
pub mod spectral;

pub use error::{Result, SdError};

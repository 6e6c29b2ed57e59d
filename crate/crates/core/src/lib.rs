//! Simulation and bifurcation analysis for a population advected up the
//! gradient of a nonlocally perceived memory map on a periodic interval.
//!
//! ```text
//! u_t = d u_xx + α (u k̄_x)_x + f(u)
//! k_t = g(u) - (μ + βu) k              (system A)
//! k_t = g(u) (κ - k) - (μ + βu) k      (system B)
//! ```

pub mod error;
pub(crate) mod quadrature;
pub mod kernels;
pub mod spectral;
pub mod model;
pub mod linstab;
pub mod solver;
pub mod bifurcation;
pub mod oracle;
pub mod cli;

pub use error::{Error, Result};

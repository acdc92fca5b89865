//! Long-memory generalized dynamic factor models.
//!
//! Simulation of fractionally integrated factor panels, smoothed-periodogram
//! spectral estimation, frequency-domain (dynamic) principal components with
//! truncated two-sided filters, closed-form tuning rules, and the diagnostics
//! and Monte Carlo harness built on top of them.

pub mod diagnostics;
pub mod eigenproj;
mod error;
pub mod filterbank;
pub mod fracsim;
pub mod harness;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};

/// Complex scalar used for every frequency-domain quantity.
pub type C64 = num_complex::Complex64;

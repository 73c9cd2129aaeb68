//! Exact finite-size numerics for the free Bose gas in its loop-soup
//! representation.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: flat product domains, Laplacian spectra, theta series,
//!   heat traces and heat kernels.
//! - [`weights`]: loop weights `t_j = Z(βj/L²)`, chemical-potential tilts and
//!   closed-form asymptotic predictions.
//! - [`partition`]: the compound-Poisson recursion for the particle-number
//!   law and everything derived from it.
//! - [`sampler`]: seeded Monte Carlo for the free and the conditioned soup.
//! - [`limitlaws`]: reference laws (Fredholm, Dickman, Poisson–Dirichlet,
//!   local Gaussian and stable profiles).
//!
//! [`special`], [`numeric`], [`fit`] and [`cache`] hold the supporting
//! numerics and the on-disk weight cache.

pub mod cache;
pub mod error;
pub mod fit;
pub mod limitlaws;
pub mod numeric;
pub mod partition;
pub mod sampler;
pub mod special;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};

//! Sparse recovery by gradual atom pruning.
//!
//! The crate bundles the uncorrelated and correlation-aware pruning solvers
//! ([`gap`], [`gapcorr`]), comparison solvers ([`baselines`]), test-signal
//! generators ([`signals`]), an orthonormal Haar transform ([`wavelet`]), the
//! dense linear algebra they share ([`numkit`]), and a reproducible
//! experiment harness ([`bench`]).

pub mod baselines;
pub mod bench;
pub mod error;
pub mod gap;
pub mod gapcorr;
pub mod numkit;
pub mod signals;
pub mod wavelet;

pub use error::{Error, Result};

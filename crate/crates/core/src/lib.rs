//! Numerical core for deterministic diffusion sampling, exact latent
//! inversion, and two-stage editing with recorded-noise injection.
//!
//! Everything runs against closed-form denoisers for Gaussian and
//! Gaussian-mixture data distributions, so every pipeline stage can be
//! checked against an analytic or Monte Carlo reference instead of a
//! trained network. The same plumbing accepts any [`oracle::DenoiserOracle`]
//! implementation.

pub mod cli;
pub mod config;
pub mod editor;
pub mod error;
pub mod experiments;
pub mod inversion;
pub mod metrics;
pub mod oracle;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};

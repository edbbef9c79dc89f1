//! Gaussian process latent force models for joint input and state
//! estimation of linear structural systems.

pub mod baselines;
pub mod calibration;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lfm;
pub mod numerics;
pub mod series;
pub mod structural;

pub use error::{Error, Result};

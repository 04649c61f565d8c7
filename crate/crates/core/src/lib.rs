//! Exact conjugate Bayesian inference for balanced linear mixed models.

pub mod balanced;
pub mod bgn;
pub mod error;
pub mod evidence;
pub mod freq;
pub mod gbeta4;
pub mod general;
pub mod numkernel;
pub mod methods;
pub mod optim;
pub mod selfcheck;
pub mod simstudy;

pub use error::{Error, Result};

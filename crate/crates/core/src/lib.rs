//! Bayesian optimization with a Gaussian-process surrogate that can absorb
//! virtual derivative-sign observations on the boundary of a box-shaped
//! search space.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel`]: squared-exponential covariance and its derivative
//!   cross-covariances over mixed value / partial-derivative latents.
//! * [`probit`]: numerically stable normal CDF helpers and the probit sign
//!   likelihood.
//! * [`ep`]: expectation propagation for probit sign sites, energies and the
//!   sign-support check.
//! * [`gp`]: the surrogate state, prediction and hyperparameter fitting.
//! * [`acquisition`]: lower confidence bound and its inner optimizer.
//! * [`bo`]: the VBO / DBO / ADBO optimization loops.
//! * [`objectives`]: synthetic benchmark functions and the initial design.

pub mod acquisition;
pub mod bo;
pub mod domain;
pub mod ep;
pub mod error;
pub mod gp;
pub mod kernel;
mod linalg;
pub mod objectives;
pub mod optim;
pub mod probit;

pub use domain::BoxDomain;
pub use error::{Error, Result};

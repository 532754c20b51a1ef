//! Bayesian optimization over conditional parameter spaces.
//!
//! The [`kernel`] module holds the arc kernel, which compares points whose
//! sets of relevant dimensions differ. [`gp`] and [`infer`] provide GP
//! regression and slice-sampled hyperparameters, [`bo`] the
//! expected-improvement loop over a Sobol grid, and [`bench`] the synthetic
//! experiments and baselines.

pub mod bench;
pub mod bo;
pub mod checks;
pub mod cli;
pub mod error;
pub mod gp;
pub mod infer;
pub mod kernel;
pub mod par;
pub mod space;

pub use error::{Error, Result};

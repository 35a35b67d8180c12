//! Default Bayesian analysis of isotropic Gaussian random fields.
//!
//! Exact and spectrally approximated reference priors for the range
//! parameter of Matérn models, integrated and restricted likelihoods,
//! non-iterative posterior sampling, smoothness selection and the
//! simulation harness used to check frequentist properties.

pub mod bayes;
pub mod covmodel;
pub mod designs;
pub mod error;
pub mod likelihoods;
pub mod linalg;
pub mod numerics;
pub mod priors;
pub mod simstudy;
pub mod special;
pub mod spectral_basis;

pub use error::{Error, Result};

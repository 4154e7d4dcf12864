//! Approximate Gaussian process regression with structured random features.
//!
//! The toolkit streams datasets from disk in fixed-size chunks, generates
//! random features with fast Hadamard transforms, fits the regularized
//! feature-space system with (preconditioned) conjugate gradients, estimates
//! the marginal likelihood log-determinant by stochastic Lanczos quadrature,
//! and layers calibration, clustering, retrieval and active-learning tools on
//! top of the fitted model.

pub mod analysis;
pub mod artifact;
pub mod dataset;
pub mod error;
pub mod features;
pub mod gp;
pub mod linalg;
pub mod precond;
pub mod rng;
pub mod solve;
pub mod stats;
pub mod stream;
pub mod transform;

pub use error::{Error, Result};

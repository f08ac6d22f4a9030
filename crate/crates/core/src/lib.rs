//! Sequential Monte Carlo inference for dynamic latent space network models.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: latent AR(1) dynamics, edge likelihoods and scenario simulators
//! - [`smc`]: weights, resampling, ESS and a generic bootstrap particle filter
//! - [`kalman`]: a scalar linear-Gaussian model with an exact Kalman likelihood
//! - [`girf`]: the guided intermediate resampling filter
//! - [`estimation`]: score estimation, offline/online gradient ascent, initialisation
//! - [`metrics`]: probability MSE, ROC/AUC, predictive simulation and AAE
//! - [`data_io`]: contact-list ingestion, windowing and CSV/TOML serialisation

pub mod data_io;
pub mod error;
pub mod estimation;
pub mod exec;
mod fastmath;
pub mod girf;
pub mod kalman;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod smc;

pub use error::{Error, Result};
pub use exec::Execution;
pub use rng::{RandomStreams, StreamKind};

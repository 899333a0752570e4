//! Simulation and inference for preferentially sampled spatial data.
//!
//! The crate covers the full pipeline of a preferential-sampling simulation
//! study: Gaussian-process and point-process simulation ([`spatial`],
//! [`sampling`]), sampling-weight construction ([`weights`]), weighted
//! pseudo-likelihood and shared-latent-process posteriors ([`models`]),
//! MCMC ([`inference`]), replication scoring ([`evaluation`]) and the
//! experiment driver behind the `prefsamp` binary ([`harness`]).

pub mod error;
pub mod evaluation;
pub mod harness;
pub mod inference;
pub mod models;
pub mod sampling;
pub mod spatial;
pub mod weights;

mod rng;
mod stats;

pub use error::{Error, Result};
pub use rng::{derive_seed, seeded_rng, SimRng};

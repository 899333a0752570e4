//! Posterior sampling, convergence diagnostics, summaries and prediction
//! surfaces.

mod diagnostics;
mod hmc;
mod mwg;
mod summary;

pub use diagnostics::ess;
pub use hmc::hmc_sample;
pub use mwg::{mwg_sample_shared, shared_init};
pub use summary::{
    predict_surface, summarize, summarize_columns, BasisMean, LinearMean, MeanFunction, ParamSummary,
    PosteriorSummary, PredictionSurface, SharedMean,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub seed: u64,
    /// Fixed leapfrog step size; disables step-size and metric adaptation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
}

impl SamplerConfig {
    /// 5,500 iterations with 1,000 burn-in.
    pub fn pseudo_likelihood(seed: u64) -> Self {
        Self { n_iter: 5500, n_burn: 1000, leapfrog_steps: 25, target_accept: 0.8, seed, step_size: None }
    }

    /// 12,000 iterations with 2,000 burn-in.
    pub fn shared_process(seed: u64) -> Self {
        Self { n_iter: 12_000, n_burn: 2000, ..Self::pseudo_likelihood(seed) }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::Config(format!("n_burn ({}) must be below n_iter ({})", self.n_burn, self.n_iter)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::Config("leapfrog_steps must be positive".into()));
        }
        if let Some(e) = self.step_size {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config("step_size must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn n_keep(&self) -> usize {
        self.n_iter - self.n_burn
    }
}

/// Kept draws, stored row-major (one row per kept iteration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub draws: Vec<f64>,
    pub accept_rate: f64,
    pub seed: u64,
    pub divergences: usize,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, draws: Vec<f64>, accept_rate: f64, seed: u64) -> Result<Self> {
        if names.is_empty() || draws.len() % names.len() != 0 {
            return Err(Error::InvalidInput("draw matrix does not match the parameter names".into()));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { names, draws, accept_rate, seed, divergences: 0 })
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len() / self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.draws[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.n_params())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::pseudo_likelihood(1).validate().is_ok());
        let mut c = SamplerConfig::shared_process(1);
        assert_eq!(c.n_keep(), 10_000);
        c.n_burn = c.n_iter;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::pseudo_likelihood(1);
        c.target_accept = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn draws_accessors() {
        let d = PosteriorDraws::new(vec!["a".into(), "b".into()], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 0.5, 0).unwrap();
        assert_eq!(d.n_draws(), 3);
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.column(1), vec![2.0, 4.0, 6.0]);
        assert_eq!(d.index_of("b"), Some(1));
        assert!(PosteriorDraws::new(vec!["a".into()], vec![f64::NAN], 0.5, 0).is_err());
    }
}

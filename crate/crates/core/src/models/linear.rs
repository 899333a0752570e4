use serde::{Deserialize, Serialize};

use super::{dlog_half_cauchy_dlog, log_half_cauchy, log_normal, LogDensity, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::sampling::SampleSet;
use crate::weights::WeightVector;

/// Weighted Gaussian regression of the response on the coordinates, with
/// independent normal priors on the coefficients and a half-Cauchy prior on
/// the noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLinearSpec {
    pub weights: WeightVector,
    /// Prior variance of each coefficient.
    pub prior_beta_var: f64,
    pub prior_sigma_scale: f64,
}

impl PseudoLinearSpec {
    pub fn new(weights: WeightVector) -> Self {
        Self { weights, prior_beta_var: 10f64.sqrt(), prior_sigma_scale: 10.0 }
    }
}

/// Parameters: `(beta_1, .., beta_p, log sigma_z)`.
#[derive(Debug, Clone)]
pub struct PseudoLinearPosterior {
    n_coef: usize,
    design: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    w_sum: f64,
    prior_beta_sd: f64,
    prior_sigma_scale: f64,
}

impl PseudoLinearPosterior {
    /// Design columns are the two coordinates, no intercept.
    pub fn new(spec: &PseudoLinearSpec, samples: &SampleSet) -> Result<Self> {
        let design = samples.locations.iter().flat_map(|p| [p.s1, p.s2]).collect();
        Self::with_design(spec, design, 2, samples.z.clone())
    }

    /// Row-major `n x n_coef` design.
    pub fn with_design(spec: &PseudoLinearSpec, design: Vec<f64>, n_coef: usize, z: Vec<f64>) -> Result<Self> {
        if design.len() != z.len() * n_coef || spec.weights.len() != z.len() {
            return Err(Error::InvalidInput("design, response and weights disagree in length".into()));
        }
        if !(spec.prior_beta_var > 0.0 && spec.prior_sigma_scale > 0.0) {
            return Err(Error::InvalidInput("prior parameters must be positive".into()));
        }
        let w = spec.weights.normalized.clone();
        Ok(Self {
            n_coef,
            design,
            z,
            w_sum: w.iter().sum(),
            w,
            prior_beta_sd: spec.prior_beta_var.sqrt(),
            prior_sigma_scale: spec.prior_sigma_scale,
        })
    }

    pub fn n_coef(&self) -> usize {
        self.n_coef
    }
}

impl LogDensity for PseudoLinearPosterior {
    fn dim(&self) -> usize {
        self.n_coef + 1
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.n_coef;
        let beta = &x[..p];
        let log_sigma = x[p];
        let sigma = log_sigma.exp();
        let inv_var = 1.0 / (sigma * sigma);
        grad.iter_mut().for_each(|g| *g = 0.0);

        let mut wrss = 0.0;
        for (i, (&zi, &wi)) in self.z.iter().zip(&self.w).enumerate() {
            let row = &self.design[i * p..(i + 1) * p];
            let fit: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let r = zi - fit;
            wrss += wi * r * r;
            let c = wi * r * inv_var;
            for (g, a) in grad[..p].iter_mut().zip(row) {
                *g += c * a;
            }
        }
        let mut lp = -self.w_sum * (HALF_LN_2PI + log_sigma) - 0.5 * wrss * inv_var;
        grad[p] = -self.w_sum + wrss * inv_var;

        for (k, b) in beta.iter().enumerate() {
            lp += log_normal(*b, 0.0, self.prior_beta_sd);
            grad[k] -= b / (self.prior_beta_sd * self.prior_beta_sd);
        }
        lp += log_half_cauchy(sigma, self.prior_sigma_scale) + log_sigma;
        grad[p] += dlog_half_cauchy_dlog(sigma, self.prior_sigma_scale) + 1.0;
        lp
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n_coef).map(|k| format!("beta{k}")).collect();
        v.push("log_sigma_z".into());
        v
    }
}

pub fn log_pseudo_posterior_linear(
    spec: &PseudoLinearSpec,
    samples: &SampleSet,
    params: &[f64; 3],
) -> Result<(f64, Vec<f64>)> {
    let post = PseudoLinearPosterior::new(spec, samples)?;
    let mut g = vec![0.0; 3];
    let v = post.log_density_grad(params, &mut g);
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok((v, g))
}

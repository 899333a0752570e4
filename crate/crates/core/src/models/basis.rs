use serde::{Deserialize, Serialize};

use super::{dlog_half_cauchy_dlog, log_half_cauchy, LogDensity, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::sampling::SampleSet;
use crate::spatial::{BasisSet, SparseBasisMatrix};
use crate::weights::WeightVector;

/// How the horseshoe coefficients enter the parameter vector.
///
/// `Centered` samples `eta` directly with `eta_k ~ N(0, (lambda_k tau)^2)`;
/// `NonCentered` samples `eta_raw ~ N(0, 1)` and sets
/// `eta = eta_raw * lambda * tau`, which removes the funnel between the
/// coefficients and their scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HorseshoeParam {
    #[default]
    Centered,
    NonCentered,
}

/// Basis-expansion mean `p(s) = sum_k phi_k(s) eta_k` with a horseshoe prior
/// on the coefficients and half-Cauchy(0, 1) local and global scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpatialSpec {
    pub basis: BasisSet,
    pub weights: WeightVector,
    pub sigma_scale: f64,
    pub parameterization: HorseshoeParam,
}

impl BasisSpatialSpec {
    pub fn new(basis: BasisSet, weights: WeightVector) -> Self {
        Self { basis, weights, sigma_scale: 10.0, parameterization: HorseshoeParam::Centered }
    }
}

/// Parameter layout: `(eta[K], log lambda[K], log tau, log sigma_z)`.
#[derive(Debug, Clone)]
pub struct BasisPosterior {
    phi: SparseBasisMatrix,
    z: Vec<f64>,
    w: Vec<f64>,
    w_sum: f64,
    sigma_scale: f64,
    param: HorseshoeParam,
}

impl BasisPosterior {
    pub fn new(spec: &BasisSpatialSpec, samples: &SampleSet) -> Result<Self> {
        if spec.basis.is_empty() {
            return Err(Error::InvalidInput("empty basis".into()));
        }
        if spec.weights.len() != samples.len() {
            return Err(Error::InvalidInput("weights and samples disagree in length".into()));
        }
        let w = spec.weights.normalized.clone();
        Ok(Self {
            phi: SparseBasisMatrix::new(&samples.locations, &spec.basis),
            z: samples.z.clone(),
            w_sum: w.iter().sum(),
            w,
            sigma_scale: spec.sigma_scale,
            param: spec.parameterization,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.phi.n_cols
    }

    pub fn parameterization(&self) -> HorseshoeParam {
        self.param
    }

    /// Basis coefficients implied by a parameter vector.
    pub fn eta(&self, x: &[f64]) -> Vec<f64> {
        eta_from_params(x, self.n_basis(), self.param)
    }

    /// Parameter vector holding the given coefficients and scales.
    pub fn pack(&self, eta: &[f64], log_lambda: &[f64], log_tau: f64, log_sigma: f64) -> Vec<f64> {
        let tau = log_tau.exp();
        let mut x: Vec<f64> = match self.param {
            HorseshoeParam::Centered => eta.to_vec(),
            HorseshoeParam::NonCentered => {
                eta.iter().zip(log_lambda).map(|(e, l)| e / (l.exp() * tau)).collect()
            }
        };
        x.extend_from_slice(log_lambda);
        x.push(log_tau);
        x.push(log_sigma);
        x
    }
}

pub(crate) fn eta_from_params(x: &[f64], k: usize, param: HorseshoeParam) -> Vec<f64> {
    match param {
        HorseshoeParam::Centered => x[..k].to_vec(),
        HorseshoeParam::NonCentered => {
            let tau = x[2 * k].exp();
            (0..k).map(|j| x[j] * x[k + j].exp() * tau).collect()
        }
    }
}

impl LogDensity for BasisPosterior {
    fn dim(&self) -> usize {
        2 * self.n_basis() + 2
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.n_basis();
        let log_tau = x[2 * k];
        let log_sigma = x[2 * k + 1];
        let (tau, sigma) = (log_tau.exp(), log_sigma.exp());
        let inv_var = 1.0 / (sigma * sigma);
        let eta = self.eta(x);
        grad.iter_mut().for_each(|g| *g = 0.0);

        // weighted Gaussian data term
        let mut fit = vec![0.0; self.z.len()];
        self.phi.mul_vec(&eta, &mut fit);
        let mut wrss = 0.0;
        let mut scaled = vec![0.0; self.z.len()];
        for i in 0..self.z.len() {
            let r = self.z[i] - fit[i];
            wrss += self.w[i] * r * r;
            scaled[i] = self.w[i] * r * inv_var;
        }
        let mut lp = -self.w_sum * (HALF_LN_2PI + log_sigma) - 0.5 * wrss * inv_var;
        grad[2 * k + 1] = -self.w_sum + wrss * inv_var;
        let mut g_eta = vec![0.0; k];
        self.phi.add_tr_mul_vec(&scaled, &mut g_eta);

        let mut g_tau = 0.0;
        for j in 0..k {
            let log_lam = x[k + j];
            let lam = log_lam.exp();
            match self.param {
                HorseshoeParam::Centered => {
                    let sd = lam * tau;
                    let u = eta[j] / sd;
                    lp += -HALF_LN_2PI - log_lam - log_tau - 0.5 * u * u;
                    grad[j] = g_eta[j] - u / sd;
                    grad[k + j] = u * u;
                    g_tau += u * u - 1.0;
                }
                HorseshoeParam::NonCentered => {
                    let raw = x[j];
                    lp += -HALF_LN_2PI - 0.5 * raw * raw;
                    grad[j] = g_eta[j] * lam * tau - raw;
                    grad[k + j] = g_eta[j] * eta[j] + 1.0;
                    g_tau += g_eta[j] * eta[j];
                }
            }
            lp += log_half_cauchy(lam, 1.0) + log_lam;
            grad[k + j] += dlog_half_cauchy_dlog(lam, 1.0);
        }
        lp += log_half_cauchy(tau, 1.0) + log_tau;
        grad[2 * k] = g_tau + dlog_half_cauchy_dlog(tau, 1.0) + 1.0;

        lp += log_half_cauchy(sigma, self.sigma_scale) + log_sigma;
        grad[2 * k + 1] += dlog_half_cauchy_dlog(sigma, self.sigma_scale) + 1.0;
        lp
    }

    fn param_names(&self) -> Vec<String> {
        let k = self.n_basis();
        let eta = match self.param {
            HorseshoeParam::Centered => "eta",
            HorseshoeParam::NonCentered => "eta_raw",
        };
        let mut v: Vec<String> = (1..=k).map(|j| format!("{eta}{j}")).collect();
        v.extend((1..=k).map(|j| format!("log_lambda{j}")));
        v.push("log_tau".into());
        v.push("log_sigma_z".into());
        v
    }
}

pub fn log_pseudo_posterior_basis(
    spec: &BasisSpatialSpec,
    samples: &SampleSet,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let post = BasisPosterior::new(spec, samples)?;
    if params.len() != post.dim() {
        return Err(Error::InvalidInput(format!("expected {} parameters, got {}", post.dim(), params.len())));
    }
    let mut g = vec![0.0; post.dim()];
    let v = post.log_density_grad(params, &mut g);
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok((v, g))
}

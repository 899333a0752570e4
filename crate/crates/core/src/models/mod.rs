//! Log-posterior densities for the fit-able models and closed-form weighted
//! estimators.
//!
//! Scale parameters are sampled on the log scale; every density here
//! includes the corresponding log-Jacobian.

mod basis;
mod linear;
mod shared;
mod wls;

pub use basis::{log_pseudo_posterior_basis, BasisPosterior, BasisSpatialSpec, HorseshoeParam};
pub(crate) use basis::eta_from_params;
pub use linear::{log_pseudo_posterior_linear, PseudoLinearPosterior, PseudoLinearSpec};
pub use shared::{
    log_posterior_shared, GridKernel, KnotLattice, SharedParams, SharedProcessModel, SharedProcessSpec,
};
pub use wls::{
    coordinate_design, estimating_equation_score, weight_covariate_fit, weighted_least_squares,
    wls_solve, WeightCovariateFit, WlsFit,
};

use std::f64::consts::PI;

/// A differentiable log density on an unconstrained parameter vector.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Returns the log density at `x` and writes its gradient into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(x, &mut g)
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta{i}")).collect()
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log N(x; mean, sd^2)`.
pub(crate) fn log_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * u * u
}

/// Log density of a half-Cauchy(0, scale) at `x > 0`.
pub(crate) fn log_half_cauchy(x: f64, scale: f64) -> f64 {
    let u = x / scale;
    (2.0 / (PI * scale)).ln() - (1.0 + u * u).ln()
}

/// d/d(log x) of `log_half_cauchy(x, scale)`.
pub(crate) fn dlog_half_cauchy_dlog(x: f64, scale: f64) -> f64 {
    let u2 = (x / scale).powi(2);
    -2.0 * u2 / (1.0 + u2)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities_match_closed_forms() {
        assert!((log_normal(0.0, 0.0, 1.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((log_normal(1.0, 3.0, 2.0) - (-(2.0 * PI).ln() / 2.0 - 2f64.ln() - 0.5)).abs() < 1e-14);
        // half-Cauchy(0, 10) at 10: 2 / (pi * 10 * 2)
        assert!((log_half_cauchy(10.0, 10.0) - (1.0 / (PI * 10.0)).ln()).abs() < 1e-14);
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SampleSet;
use crate::spatial::Point2;
use crate::weights::WeightVector;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlsFit {
    pub coef: Vec<f64>,
    /// `sum_i w_i r_i^2 / (sum_i w_i - p)`.
    pub residual_var: f64,
    /// Model-based covariance `residual_var * (X'WX)^-1`, row-major.
    pub cov: Vec<f64>,
}

impl WlsFit {
    pub fn se(&self) -> Vec<f64> {
        let p = self.coef.len();
        (0..p).map(|k| self.cov[k * p + k].sqrt()).collect()
    }
}

/// Rows `[s1, s2]`, preceded by a column of ones when `intercept` is set.
pub fn coordinate_design(locations: &[Point2], intercept: bool) -> DMatrix<f64> {
    let p = if intercept { 3 } else { 2 };
    DMatrix::from_fn(locations.len(), p, |i, k| {
        let s = &locations[i];
        match (intercept, k) {
            (true, 0) => 1.0,
            (true, 1) | (false, 0) => s.s1,
            _ => s.s2,
        }
    })
}

/// Solves `min sum_i w_i (z_i - x_i'b)^2` through a QR factorization of
/// `W^{1/2} X`.
pub fn weighted_least_squares(x: &DMatrix<f64>, z: &[f64], w: &[f64]) -> Result<WlsFit> {
    let (n, p) = x.shape();
    if z.len() != n || w.len() != n {
        return Err(Error::InvalidInput("design, response and weights disagree in length".into()));
    }
    if n < p {
        return Err(Error::RankDeficient);
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
    }
    let mut xs = x.clone();
    let mut zs = DVector::from_column_slice(z);
    for i in 0..n {
        let r = w[i].sqrt();
        xs.row_mut(i).scale_mut(r);
        zs[i] *= r;
    }
    let qr = xs.clone().qr();
    let r = qr.r();
    let rmax = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if rmax == 0.0 || (0..p).any(|k| r[(k, k)].abs() <= RANK_TOL * rmax) {
        return Err(Error::RankDeficient);
    }
    let qtz = qr.q().transpose() * &zs;
    let coef = r.solve_upper_triangular(&qtz).ok_or(Error::RankDeficient)?;

    let resid = &zs - &xs * &coef;
    let w_sum: f64 = w.iter().sum();
    let dof = (w_sum - p as f64).max(1.0);
    let residual_var = resid.norm_squared() / dof;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).ok_or(Error::RankDeficient)?;
    let cov = (&r_inv * r_inv.transpose()) * residual_var;
    Ok(WlsFit {
        coef: coef.iter().copied().collect(),
        residual_var,
        cov: cov.transpose().iter().copied().collect(),
    })
}

/// Weighted regression of the response on the coordinates, no intercept.
pub fn wls_solve(samples: &SampleSet, weights: &WeightVector) -> Result<WlsFit> {
    if weights.len() != samples.len() {
        return Err(Error::InvalidInput("weights and samples disagree in length".into()));
    }
    weighted_least_squares(&coordinate_design(&samples.locations, false), &samples.z, &weights.normalized)
}

/// Gaussian score of the weighted log-likelihood with respect to the
/// coefficients, up to the factor `1 / sigma^2`: `X'W(z - Xb)`.
pub fn estimating_equation_score(x: &DMatrix<f64>, z: &[f64], w: &[f64], coef: &[f64]) -> Vec<f64> {
    let fit = x * DVector::from_column_slice(coef);
    let mut score = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        let c = w[i] * (z[i] - fit[i]);
        for (k, s) in score.iter_mut().enumerate() {
            *s += c * x[(i, k)];
        }
    }
    score
}

/// OLS of `z` on `[1?, s1, s2, w]`, with `w` the normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCovariateFit {
    pub intercept: Option<f64>,
    pub beta: [f64; 2],
    /// Coefficient on the weight column.
    pub a: f64,
    pub fit: WlsFit,
}

pub fn weight_covariate_fit(samples: &SampleSet, weights: &WeightVector, intercept: bool) -> Result<WeightCovariateFit> {
    if weights.len() != samples.len() {
        return Err(Error::InvalidInput("weights and samples disagree in length".into()));
    }
    let base = coordinate_design(&samples.locations, intercept);
    let p = base.ncols();
    let mut x = base.insert_column(p, 0.0);
    for (i, w) in weights.normalized.iter().enumerate() {
        x[(i, p)] = *w;
    }
    let ones = vec![1.0; samples.len()];
    let fit = weighted_least_squares(&x, &samples.z, &ones)?;
    let o = usize::from(intercept);
    Ok(WeightCovariateFit {
        intercept: intercept.then(|| fit.coef[0]),
        beta: [fit.coef[o], fit.coef[o + 1]],
        a: fit.coef[p],
        fit,
    })
}

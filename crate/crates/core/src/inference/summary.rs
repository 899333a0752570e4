use serde::{Deserialize, Serialize};

use super::{ess, PosteriorDraws};
use crate::error::{Error, Result};
use crate::models::{GridKernel, HorseshoeParam, KnotLattice, SharedParams};
use crate::spatial::{BasisSet, RegularGrid, SparseBasisMatrix};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("interval level {level} outside (0, 1)")))
    }
}

/// Mean, equal-tailed interval and effective sample size of every parameter.
pub fn summarize(draws: &PosteriorDraws, level: f64) -> Result<PosteriorSummary> {
    let cols: Vec<usize> = (0..draws.n_params()).collect();
    summarize_columns(draws, level, &cols)
}

/// As [`summarize`], restricted to the given parameter columns.
pub fn summarize_columns(draws: &PosteriorDraws, level: f64, cols: &[usize]) -> Result<PosteriorSummary> {
    check_level(level)?;
    let tail = 0.5 * (1.0 - level);
    let mut params = Vec::with_capacity(cols.len());
    for &j in cols {
        let name = draws.names.get(j).ok_or_else(|| Error::InvalidInput(format!("no parameter column {j}")))?;
        let col = draws.column(j);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let e = ess(&col);
        let mut sorted = col;
        sorted.sort_by(f64::total_cmp);
        params.push(ParamSummary {
            name: name.clone(),
            mean,
            lower: quantile_sorted(&sorted, tail),
            upper: quantile_sorted(&sorted, 1.0 - tail),
            ess: e,
        });
    }
    Ok(PosteriorSummary { level, params })
}

/// Posterior mean surface with pointwise equal-tailed bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSurface {
    pub grid: RegularGrid,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Maps one posterior draw to mean-function values at grid centers.
pub trait MeanFunction {
    /// Returns an evaluator writing the mean function of a draw at every
    /// center of `grid`, in grid order.
    fn evaluator<'a>(&'a self, grid: &'a RegularGrid) -> Result<Box<dyn Fn(&[f64], &mut [f64]) + 'a>>;
}

/// `x(s)'b` with `x(s) = (s1, s2)`, optionally preceded by an intercept;
/// coefficients are the leading entries of each draw.
#[derive(Debug, Clone, Copy)]
pub struct LinearMean {
    pub intercept: bool,
}

impl MeanFunction for LinearMean {
    fn evaluator<'a>(&'a self, grid: &'a RegularGrid) -> Result<Box<dyn Fn(&[f64], &mut [f64]) + 'a>> {
        let o = usize::from(self.intercept);
        Ok(Box::new(move |d: &[f64], out: &mut [f64]| {
            let c = if self.intercept { d[0] } else { 0.0 };
            for (v, s) in out.iter_mut().zip(&grid.centers) {
                *v = c + d[o] * s.s1 + d[o + 1] * s.s2;
            }
        }))
    }
}

/// `sum_k phi_k(s) eta_k` for a basis-model draw.
#[derive(Debug, Clone)]
pub struct BasisMean {
    pub basis: BasisSet,
    pub param: HorseshoeParam,
}

impl MeanFunction for BasisMean {
    fn evaluator<'a>(&'a self, grid: &'a RegularGrid) -> Result<Box<dyn Fn(&[f64], &mut [f64]) + 'a>> {
        let phi = SparseBasisMatrix::new(&grid.centers, &self.basis);
        let k = self.basis.len();
        let param = self.param;
        Ok(Box::new(move |d: &[f64], out: &mut [f64]| {
            let eta = crate::models::eta_from_params(d, k, param);
            phi.mul_vec(&eta, out);
        }))
    }
}

/// `mu + x(s)'b + beta Y(s)` for a shared-process draw. With
/// `center_latent`, `Y(s)` is replaced by its grid average.
#[derive(Debug, Clone)]
pub struct SharedMean {
    pub knots: KnotLattice,
    pub kernel_sd: f64,
    pub n_fixed: usize,
    pub center_latent: bool,
}

impl MeanFunction for SharedMean {
    fn evaluator<'a>(&'a self, grid: &'a RegularGrid) -> Result<Box<dyn Fn(&[f64], &mut [f64]) + 'a>> {
        let kernel = GridKernel::new(&self.knots, self.kernel_sd, grid);
        let k = self.knots.len();
        Ok(Box::new(move |d: &[f64], out: &mut [f64]| {
            let p = SharedParams::from_slice(d, k, self.n_fixed).expect("draw matches layout");
            let y = kernel.apply(&p.gamma);
            let ybar = y.iter().sum::<f64>() / y.len() as f64;
            for ((v, s), yi) in out.iter_mut().zip(&grid.centers).zip(&y) {
                let mut f = p.mu;
                if self.n_fixed == 2 {
                    f += p.b[0] * s.s1 + p.b[1] * s.s2;
                }
                *v = f + p.beta * if self.center_latent { ybar } else { *yi };
            }
        }))
    }
}

/// Evaluates the mean function of every draw on `grid`; returns the
/// across-draw mean and pointwise 0.05 / 0.95 quantiles.
pub fn predict_surface<M: MeanFunction + ?Sized>(
    model: &M,
    draws: &PosteriorDraws,
    grid: &RegularGrid,
) -> Result<PredictionSurface> {
    let nd = draws.n_draws();
    if nd == 0 {
        return Err(Error::InvalidInput("no draws to predict from".into()));
    }
    let g = grid.len();
    let eval = model.evaluator(grid)?;
    // cell-major so each cell's values are contiguous
    let mut values = vec![0.0; g * nd];
    let mut buf = vec![0.0; g];
    for (i, row) in draws.rows().enumerate() {
        eval(row, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            values[c * nd + i] = *v;
        }
    }
    let mut mean = Vec::with_capacity(g);
    let mut lower = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    for cell in values.chunks_exact_mut(nd) {
        mean.push(cell.iter().sum::<f64>() / nd as f64);
        cell.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(cell, 0.05));
        upper.push(quantile_sorted(cell, 0.95));
    }
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(PredictionSurface { grid: grid.clone(), mean, lower, upper })
}

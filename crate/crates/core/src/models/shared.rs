use serde::{Deserialize, Serialize};

use super::{log_half_cauchy, log_normal, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::sampling::SampleSet;
use crate::spatial::{Point2, RegularGrid};

/// Square lattice of `m x m` knots with both axes spanning `[lo, hi]`,
/// endpoints included. Knot `(a, b)` sits at index `b * m + a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotLattice {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
}

impl KnotLattice {
    pub fn regular(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m < 2 || !(hi > lo) {
            return Err(Error::InvalidInput("knot lattice needs m >= 2 and hi > lo".into()));
        }
        Ok(Self { lo, hi, m })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.m).map(|a| self.lo + a as f64 * self.spacing()).collect()
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<Point2> {
        let ax = self.axis();
        ax.iter().flat_map(|&b| ax.iter().map(move |&a| Point2::new(a, b))).collect()
    }
}

/// Shared latent process model: a kernel convolution `Y(s) = sum_j k(s - u_j) gamma_j`
/// drives both the log intensity `alpha + Y` of the sampling locations and
/// the response mean `mu + x(s)'b + beta Y(s)`.
///
/// With `covariates` set, `x(s) = (s1, s2)`; otherwise the fixed effect is
/// the intercept alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedProcessSpec {
    pub knots: KnotLattice,
    pub fit_grid: RegularGrid,
    pub kernel_sd: f64,
    pub covariates: bool,
    pub prior_sd: f64,
    pub sigma_z_scale: f64,
    pub sigma_gamma_scale: f64,
}

impl SharedProcessSpec {
    /// 15 x 15 knots on `[-0.2, 1.2]`, kernel sd equal to the knot spacing
    /// and the 41 x 41 fit grid over the unit square.
    pub fn default_unit(covariates: bool) -> Self {
        let knots = KnotLattice { lo: -0.2, hi: 1.2, m: 15 };
        Self {
            kernel_sd: knots.spacing(),
            knots,
            fit_grid: RegularGrid::default_unit(),
            covariates,
            prior_sd: 10.0,
            sigma_z_scale: 1.0,
            sigma_gamma_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        if !(self.kernel_sd > 0.0) {
            return Err(Error::InvalidInput("kernel sd must be positive".into()));
        }
        if self.knots.spacing() > self.kernel_sd + tol {
            return Err(Error::InvalidInput(format!(
                "knot spacing {} exceeds kernel sd {}",
                self.knots.spacing(),
                self.kernel_sd
            )));
        }
        let (d1, d2) = self.fit_grid.spacing();
        if d1.max(d2) > self.kernel_sd + tol {
            return Err(Error::InvalidInput("fit grid spacing exceeds kernel sd".into()));
        }
        let d = &self.fit_grid.domain;
        if self.knots.lo > d.min1.min(d.min2) + tol || self.knots.hi < d.max1.max(d.max2) - tol {
            return Err(Error::InvalidInput("knots do not cover the fit grid".into()));
        }
        if !(self.prior_sd > 0.0 && self.sigma_z_scale > 0.0 && self.sigma_gamma_scale > 0.0) {
            return Err(Error::InvalidInput("prior scales must be positive".into()));
        }
        Ok(())
    }

    pub fn n_fixed(&self) -> usize {
        if self.covariates {
            2
        } else {
            0
        }
    }

    /// Length of the flattened parameter vector.
    pub fn dim(&self) -> usize {
        self.knots.len() + self.n_fixed() + 5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    pub gamma: Vec<f64>,
    pub mu: f64,
    pub b: Vec<f64>,
    pub beta: f64,
    pub alpha: f64,
    pub log_sigma_z: f64,
    pub log_sigma_gamma: f64,
}

impl SharedParams {
    /// Layout: `(gamma, mu, b, beta, alpha, log sigma_z, log sigma_gamma)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.gamma.clone();
        v.push(self.mu);
        v.extend_from_slice(&self.b);
        v.extend([self.beta, self.alpha, self.log_sigma_z, self.log_sigma_gamma]);
        v
    }

    pub fn from_slice(x: &[f64], n_knots: usize, n_fixed: usize) -> Result<Self> {
        if x.len() != n_knots + n_fixed + 5 {
            return Err(Error::InvalidInput(format!("expected {} parameters, got {}", n_knots + n_fixed + 5, x.len())));
        }
        let o = n_knots + 1 + n_fixed;
        Ok(Self {
            gamma: x[..n_knots].to_vec(),
            mu: x[n_knots],
            b: x[n_knots + 1..o].to_vec(),
            beta: x[o],
            alpha: x[o + 1],
            log_sigma_z: x[o + 2],
            log_sigma_gamma: x[o + 3],
        })
    }

    pub fn names(n_knots: usize, n_fixed: usize) -> Vec<String> {
        let mut v: Vec<String> = (1..=n_knots).map(|j| format!("gamma{j}")).collect();
        v.push("mu".into());
        v.extend((1..=n_fixed).map(|k| format!("b{k}")));
        v.extend(["beta", "alpha", "log_sigma_z", "log_sigma_gamma"].map(String::from));
        v
    }
}

/// Separable knot-to-grid kernel: `Y = K1 Gamma K2'` with
/// `Gamma[a, b] = gamma[b * m + a]`.
#[derive(Debug, Clone)]
pub struct GridKernel {
    m: usize,
    n1: usize,
    n2: usize,
    /// Row-major `n1 x m` and `n2 x m` axis factors.
    k1: Vec<f64>,
    k2: Vec<f64>,
}

impl GridKernel {
    pub fn new(knots: &KnotLattice, kernel_sd: f64, grid: &RegularGrid) -> Self {
        let ax = knots.axis();
        let (a1, a2) = grid_axes(grid);
        Self {
            m: knots.m,
            n1: grid.n1,
            n2: grid.n2,
            k1: axis_kernel(&a1, &ax, kernel_sd),
            k2: axis_kernel(&a2, &ax, kernel_sd),
        }
    }

    pub fn apply(&self, gamma: &[f64]) -> Vec<f64> {
        let (m, n1, n2) = (self.m, self.n1, self.n2);
        // t[j * m + a] = sum_b Gamma[a, b] K2[j, b]
        let mut t = vec![0.0; n2 * m];
        for j in 0..n2 {
            let k2 = &self.k2[j * m..(j + 1) * m];
            let tj = &mut t[j * m..(j + 1) * m];
            for (b, &kb) in k2.iter().enumerate() {
                if kb < 1e-300 {
                    continue;
                }
                let col = &gamma[b * m..(b + 1) * m];
                for (ta, g) in tj.iter_mut().zip(col) {
                    *ta += kb * g;
                }
            }
        }
        let mut y = vec![0.0; n1 * n2];
        for j in 0..n2 {
            let tj = &t[j * m..(j + 1) * m];
            for i in 0..n1 {
                let k1 = &self.k1[i * m..(i + 1) * m];
                y[j * n1 + i] = k1.iter().zip(tj).map(|(a, b)| a * b).sum();
            }
        }
        y
    }
}

/// Precomputed kernel matrices for one dataset.
#[derive(Debug, Clone)]
pub struct SharedProcessModel {
    spec: SharedProcessSpec,
    grid_kernel: GridKernel,
    /// Observation by knot kernel (row-major, `n_obs x K`).
    k_obs: Vec<f64>,
    locations: Vec<Point2>,
    z: Vec<f64>,
}

fn kernel_1d(d: f64, sd: f64) -> f64 {
    (-0.5 * d * d / (sd * sd)).exp()
}

fn axis_kernel(coords: &[f64], knots: &[f64], sd: f64) -> Vec<f64> {
    coords.iter().flat_map(|&c| knots.iter().map(move |&u| kernel_1d(c - u, sd))).collect()
}

fn grid_axes(grid: &RegularGrid) -> (Vec<f64>, Vec<f64>) {
    let a1 = (0..grid.n1).map(|i| grid.centers[i].s1).collect();
    let a2 = (0..grid.n2).map(|j| grid.centers[j * grid.n1].s2).collect();
    (a1, a2)
}

impl SharedProcessModel {
    pub fn new(spec: &SharedProcessSpec, samples: &SampleSet) -> Result<Self> {
        spec.validate()?;
        if samples.is_empty() {
            return Err(Error::TooFewPoints { kept: 0, min: 1 });
        }
        Ok(Self {
            spec: spec.clone(),
            grid_kernel: GridKernel::new(&spec.knots, spec.kernel_sd, &spec.fit_grid),
            k_obs: kernel_rows(&samples.locations, &spec.knots, spec.kernel_sd),
            locations: samples.locations.clone(),
            z: samples.z.clone(),
        })
    }

    pub fn spec(&self) -> &SharedProcessSpec {
        &self.spec
    }

    pub fn n_obs(&self) -> usize {
        self.z.len()
    }

    pub fn locations(&self) -> &[Point2] {
        &self.locations
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// `Y` at the fit-grid centers.
    pub fn latent_grid(&self, gamma: &[f64]) -> Vec<f64> {
        self.grid_kernel.apply(gamma)
    }

    pub fn latent_obs(&self, gamma: &[f64]) -> Vec<f64> {
        let k = gamma.len();
        self.k_obs.chunks_exact(k).map(|row| row.iter().zip(gamma).map(|(a, b)| a * b).sum()).collect()
    }

    /// `Y` at arbitrary points by direct summation over knots.
    pub fn latent_at(&self, gamma: &[f64], points: &[Point2]) -> Vec<f64> {
        let rows = kernel_rows(points, &self.spec.knots, self.spec.kernel_sd);
        rows.chunks_exact(gamma.len()).map(|row| row.iter().zip(gamma).map(|(a, b)| a * b).sum()).collect()
    }

    /// `sum_cells exp(Y) * cell_area`; the intensity integral is this times `exp(alpha)`.
    pub fn intensity_mass(&self, y_grid: &[f64]) -> f64 {
        y_grid.iter().map(|y| y.exp()).sum::<f64>() * self.spec.fit_grid.cell_area
    }

    /// `sum_obs (alpha + Y(s_i)) - exp(alpha) * sum_cells exp(Y) * area`.
    pub fn point_process_term(&self, alpha: f64, y_grid: &[f64], y_obs: &[f64]) -> f64 {
        let n = y_obs.len() as f64;
        n * alpha + y_obs.iter().sum::<f64>() - alpha.exp() * self.intensity_mass(y_grid)
    }

    /// Fixed-effect part of the response mean at observation `i`.
    pub fn fixed_at(&self, p: &SharedParams, s: &Point2) -> f64 {
        let mut f = p.mu;
        if self.spec.covariates {
            f += p.b[0] * s.s1 + p.b[1] * s.s2;
        }
        f
    }

    pub fn response_term(&self, p: &SharedParams, y_obs: &[f64]) -> f64 {
        let sigma = p.log_sigma_z.exp();
        let mut rss = 0.0;
        for ((s, z), y) in self.locations.iter().zip(&self.z).zip(y_obs) {
            let r = z - self.fixed_at(p, s) - p.beta * y;
            rss += r * r;
        }
        let n = self.z.len() as f64;
        -n * (HALF_LN_2PI + p.log_sigma_z) - 0.5 * rss / (sigma * sigma)
    }

    /// Priors on the scalars, including log-Jacobians for the log scales,
    /// and the `N(0, sigma_gamma^2)` prior on the knot coefficients.
    pub fn prior_term(&self, p: &SharedParams) -> f64 {
        let sd = self.spec.prior_sd;
        let mut lp = log_normal(p.mu, 0.0, sd) + log_normal(p.beta, 0.0, sd) + log_normal(p.alpha, 0.0, sd);
        lp += p.b.iter().map(|b| log_normal(*b, 0.0, sd)).sum::<f64>();
        lp += log_half_cauchy(p.log_sigma_z.exp(), self.spec.sigma_z_scale) + p.log_sigma_z;
        lp += log_half_cauchy(p.log_sigma_gamma.exp(), self.spec.sigma_gamma_scale) + p.log_sigma_gamma;
        let ss: f64 = p.gamma.iter().map(|g| g * g).sum();
        lp + gamma_prior(ss, p.gamma.len(), p.log_sigma_gamma)
    }

    pub fn log_posterior(&self, p: &SharedParams) -> Result<f64> {
        if p.gamma.len() != self.spec.knots.len() || p.b.len() != self.spec.n_fixed() {
            return Err(Error::InvalidInput("parameter dimensions do not match the model".into()));
        }
        let yg = self.latent_grid(&p.gamma);
        let yo = self.latent_obs(&p.gamma);
        let v = self.point_process_term(p.alpha, &yg, &yo) + self.response_term(p, &yo) + self.prior_term(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite)
        }
    }

    /// Mean function `mu + x(s)'b + beta Y(s)` at the fit-grid centers. With
    /// `center_latent`, `Y` is replaced by its fit-grid average, leaving the
    /// fixed-effect trend plus a constant.
    pub fn mean_surface(&self, p: &SharedParams, center_latent: bool) -> Vec<f64> {
        let y = self.latent_grid(&p.gamma);
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        self.spec
            .fit_grid
            .centers
            .iter()
            .zip(&y)
            .map(|(s, yi)| self.fixed_at(p, s) + p.beta * if center_latent { ybar } else { *yi })
            .collect()
    }
}

/// `sum_j log N(gamma_j; 0, sigma_gamma^2)` from the sum of squares.
pub(crate) fn gamma_prior(sum_sq: f64, k: usize, log_sigma_gamma: f64) -> f64 {
    let var = (2.0 * log_sigma_gamma).exp();
    -(k as f64) * (HALF_LN_2PI + log_sigma_gamma) - 0.5 * sum_sq / var
}

fn kernel_rows(points: &[Point2], knots: &KnotLattice, sd: f64) -> Vec<f64> {
    let ax = knots.axis();
    let m = knots.m;
    let mut out = Vec::with_capacity(points.len() * m * m);
    for p in points {
        let k1: Vec<f64> = ax.iter().map(|u| kernel_1d(p.s1 - u, sd)).collect();
        let k2: Vec<f64> = ax.iter().map(|u| kernel_1d(p.s2 - u, sd)).collect();
        for kb in &k2 {
            out.extend(k1.iter().map(|ka| ka * kb));
        }
    }
    out
}

pub fn log_posterior_shared(spec: &SharedProcessSpec, samples: &SampleSet, params: &SharedParams) -> Result<f64> {
    SharedProcessModel::new(spec, samples)?.log_posterior(params)
}

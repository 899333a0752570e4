use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{PosteriorDraws, SamplerConfig};
use crate::error::{Error, Result};
use crate::models::{coordinate_design, weighted_least_squares, SharedParams, SharedProcessModel, SharedProcessSpec};
use crate::rng::{seeded_rng, SimRng};
use crate::sampling::SampleSet;

const TARGET_ACCEPT: f64 = 0.44;
const ADAPT_BATCH: usize = 25;
const MIN_ACCEPT: f64 = 0.01;
const MAX_SHRINKS: usize = 200;

/// Starting point: zero latent field, fixed effects from least squares,
/// intercept of the intensity matching the observed count.
pub fn shared_init(spec: &SharedProcessSpec, samples: &SampleSet) -> SharedParams {
    let n = samples.len() as f64;
    let z_mean = samples.z.iter().sum::<f64>() / n;
    let (mu, b, resid_var) = if spec.covariates {
        let x = coordinate_design(&samples.locations, true);
        match weighted_least_squares(&x, &samples.z, &vec![1.0; samples.len()]) {
            Ok(f) => (f.coef[0], vec![f.coef[1], f.coef[2]], f.residual_var),
            Err(_) => (z_mean, vec![0.0, 0.0], 1.0),
        }
    } else {
        let v = samples.z.iter().map(|z| (z - z_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (z_mean, vec![], v)
    };
    SharedParams {
        gamma: vec![0.0; spec.knots.len()],
        mu,
        b,
        beta: 0.0,
        alpha: (n / spec.fit_grid.domain.area()).ln(),
        log_sigma_z: 0.5 * resid_var.max(1e-4).ln(),
        log_sigma_gamma: 0.0,
    }
}

/// Random-walk proposal scale adapted towards the target acceptance rate.
struct Adaptive {
    log_sd: f64,
    batch_accepts: usize,
    batches: usize,
}

impl Adaptive {
    fn new(sd: f64) -> Self {
        Self { log_sd: sd.ln(), batch_accepts: 0, batches: 0 }
    }

    fn sd(&self) -> f64 {
        self.log_sd.exp()
    }

    fn end_batch(&mut self) {
        self.batches += 1;
        let rate = self.batch_accepts as f64 / ADAPT_BATCH as f64;
        let delta = (1.0 / (self.batches as f64).sqrt()).min(0.3);
        self.log_sd += if rate > TARGET_ACCEPT { delta } else { -delta };
        self.batch_accepts = 0;
    }
}

struct Chain<'a> {
    model: &'a SharedProcessModel,
    p: SharedParams,
    y_grid: Vec<f64>,
    y_obs: Vec<f64>,
    mass: f64,
    gamma_ss: f64,
    /// `mu + x'b` at each observation.
    fixed: Vec<f64>,
}

impl Chain<'_> {
    fn rss(&self, fixed: &[f64], beta: f64, y_obs: &[f64]) -> f64 {
        self.model.z().iter().zip(fixed).zip(y_obs).map(|((z, f), y)| (z - f - beta * y).powi(2)).sum()
    }

    fn response(&self, fixed: &[f64], beta: f64, log_sigma: f64) -> f64 {
        let n = fixed.len() as f64;
        -n * log_sigma - 0.5 * self.rss(fixed, beta, &self.y_obs) * (-2.0 * log_sigma).exp()
    }

    /// Terms of the log posterior that depend on the latent field.
    fn latent_loglik(&self, y_grid: &[f64], y_obs: &[f64]) -> f64 {
        let mass = self.model.intensity_mass(y_grid);
        let pp = y_obs.iter().sum::<f64>() - self.p.alpha.exp() * mass;
        pp - 0.5 * self.rss(&self.fixed, self.p.beta, y_obs) * (-2.0 * self.p.log_sigma_z).exp()
    }

    fn refresh_fixed(&mut self) {
        let p = &self.p;
        self.fixed = self.model.locations().iter().map(|s| self.model.fixed_at(p, s)).collect();
    }

    fn elliptical_slice(&mut self, rng: &mut SimRng) {
        let sd = self.p.log_sigma_gamma.exp();
        let nu: Vec<f64> = (0..self.p.gamma.len())
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                sd * e
            })
            .collect();
        let nu_grid = self.model.latent_grid(&nu);
        let nu_obs = self.model.latent_obs(&nu);
        let threshold = self.latent_loglik(&self.y_grid, &self.y_obs) + rng.random::<f64>().ln();
        let mut theta = rng.random::<f64>() * 2.0 * PI;
        let (mut lo, mut hi) = (theta - 2.0 * PI, theta);
        let mix = |a: &[f64], b: &[f64], c: f64, s: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x * c + y * s).collect()
        };
        for _ in 0..MAX_SHRINKS {
            let (s, c) = theta.sin_cos();
            let yg = mix(&self.y_grid, &nu_grid, c, s);
            let yo = mix(&self.y_obs, &nu_obs, c, s);
            let ll = self.latent_loglik(&yg, &yo);
            if ll.is_finite() && ll > threshold {
                self.p.gamma = mix(&self.p.gamma, &nu, c, s);
                self.gamma_ss = self.p.gamma.iter().map(|g| g * g).sum();
                self.mass = self.model.intensity_mass(&yg);
                self.y_grid = yg;
                self.y_obs = yo;
                return;
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            theta = lo + (hi - lo) * rng.random::<f64>();
        }
    }
}

/// Metropolis-within-Gibbs for the shared latent process model.
///
/// Each sweep updates the knot coefficients with one elliptical slice move
/// under their Gaussian prior, then each scalar (`mu`, `b`, `beta`, `alpha`,
/// `log sigma_z`, `log sigma_gamma`) with a one-dimensional random-walk
/// Metropolis step whose scale adapts towards 0.44 acceptance during burn-in.
pub fn mwg_sample_shared(spec: &SharedProcessSpec, samples: &SampleSet, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let model = SharedProcessModel::new(spec, samples)?;
    let init = shared_init(spec, samples);
    model.log_posterior(&init)?;
    let mut rng = seeded_rng(cfg.seed);

    let y_grid = model.latent_grid(&init.gamma);
    let y_obs = model.latent_obs(&init.gamma);
    let mut chain = Chain {
        model: &model,
        mass: model.intensity_mass(&y_grid),
        gamma_ss: init.gamma.iter().map(|g| g * g).sum(),
        p: init,
        y_grid,
        y_obs,
        fixed: vec![],
    };
    chain.refresh_fixed();

    let n_fixed = spec.n_fixed();
    let n = samples.len() as f64;
    let k = spec.knots.len();
    let prior_sd = spec.prior_sd;
    let prior = |v: f64| -0.5 * (v / prior_sd).powi(2);
    let half_cauchy = |log_s: f64, scale: f64| -(1.0 + (log_s.exp() / scale).powi(2)).ln() + log_s;
    let xs: Vec<[f64; 2]> = samples.locations.iter().map(|s| [s.s1, s.s2]).collect();

    // mu, b..., beta, alpha, log sigma_z, log sigma_gamma
    let n_scalar = 5 + n_fixed;
    let mut props: Vec<Adaptive> = (0..n_scalar).map(|_| Adaptive::new(0.1)).collect();
    props[n_fixed + 2] = Adaptive::new(1.0 / n.sqrt());

    let names = SharedParams::names(k, n_fixed);
    let mut out = Vec::with_capacity(cfg.n_keep() * names.len());
    let mut accepted = 0usize;

    for it in 0..cfg.n_iter {
        chain.elliptical_slice(&mut rng);

        for (j, prop) in props.iter_mut().enumerate() {
            let step = prop.sd() * rng.sample::<f64, _>(StandardNormal);
            let p = &chain.p;
            let sz = p.log_sigma_z;
            let log_ratio;
            let mut new_fixed = None;
            if j <= n_fixed {
                // mu or one of the coordinate coefficients
                let cand: Vec<f64> = chain
                    .fixed
                    .iter()
                    .zip(&xs)
                    .map(|(f, x)| f + step * if j == 0 { 1.0 } else { x[j - 1] })
                    .collect();
                let old = if j == 0 { p.mu } else { p.b[j - 1] };
                log_ratio = chain.response(&cand, p.beta, sz) - chain.response(&chain.fixed, p.beta, sz)
                    + prior(old + step)
                    - prior(old);
                new_fixed = Some(cand);
            } else if j == n_fixed + 1 {
                log_ratio = chain.response(&chain.fixed, p.beta + step, sz) - chain.response(&chain.fixed, p.beta, sz)
                    + prior(p.beta + step)
                    - prior(p.beta);
            } else if j == n_fixed + 2 {
                let a = p.alpha;
                let f = |a: f64| n * a - a.exp() * chain.mass + prior(a);
                log_ratio = f(a + step) - f(a);
            } else if j == n_fixed + 3 {
                let f = |s: f64| chain.response(&chain.fixed, p.beta, s) + half_cauchy(s, spec.sigma_z_scale);
                log_ratio = f(sz + step) - f(sz);
            } else {
                let sg = p.log_sigma_gamma;
                let f = |s: f64| {
                    -(k as f64) * s - 0.5 * chain.gamma_ss * (-2.0 * s).exp() + half_cauchy(s, spec.sigma_gamma_scale)
                };
                log_ratio = f(sg + step) - f(sg);
            }
            let take = log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio;
            if take {
                let p = &mut chain.p;
                match j {
                    0 => p.mu += step,
                    _ if j <= n_fixed => p.b[j - 1] += step,
                    _ if j == n_fixed + 1 => p.beta += step,
                    _ if j == n_fixed + 2 => p.alpha += step,
                    _ if j == n_fixed + 3 => p.log_sigma_z += step,
                    _ => p.log_sigma_gamma += step,
                }
                if let Some(f) = new_fixed {
                    chain.fixed = f;
                }
            }
            if it < cfg.n_burn {
                prop.batch_accepts += usize::from(take);
                if (it + 1) % ADAPT_BATCH == 0 {
                    prop.end_batch();
                }
            } else {
                accepted += usize::from(take);
            }
        }

        if it >= cfg.n_burn {
            out.extend(chain.p.to_vec());
        }
    }

    let rate = accepted as f64 / (cfg.n_keep() * n_scalar) as f64;
    if rate < MIN_ACCEPT {
        return Err(Error::StuckChain { rate });
    }
    PosteriorDraws::new(names, out, rate, cfg.seed)
}

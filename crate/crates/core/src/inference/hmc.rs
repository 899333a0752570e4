use rand::Rng;
use rand_distr::StandardNormal;

use super::{PosteriorDraws, SamplerConfig};
use crate::error::{Error, Result};
use crate::models::LogDensity;
use crate::rng::{seeded_rng, SimRng};

const MAX_ENERGY_ERROR: f64 = 1000.0;
const MAX_DIVERGENCE_RATE: f64 = 0.2;
const STEP_JITTER: f64 = 0.1;

/// Nesterov dual averaging of the log step size.
struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self { mu: (10.0 * eps).ln(), target, h_bar: 0.0, log_eps: eps.ln(), log_eps_bar: 0.0, t: 0.0 }
    }

    fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        if self.t > 0.0 {
            self.log_eps_bar.exp()
        } else {
            self.log_eps.exp()
        }
    }
}

/// Online mean and variance.
#[derive(Default)]
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn push(&mut self, x: &[f64]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    /// Variance shrunk towards 1e-3, as in common HMC implementations.
    fn regularized_var(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let v = s / (n - 1.0);
                (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

struct State {
    x: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

struct Integrator<'a, M: LogDensity + ?Sized> {
    target: &'a M,
    inv_metric: Vec<f64>,
}

impl<M: LogDensity + ?Sized> Integrator<'_, M> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    fn momentum(&self, rng: &mut SimRng) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| {
                let e: f64 = rng.sample(StandardNormal);
                e / m.sqrt()
            })
            .collect()
    }

    /// Runs `steps` leapfrog steps from `s` with momentum `p`; returns the
    /// end state or `None` if the trajectory left the finite region.
    fn trajectory(&self, s: &State, p: &mut [f64], eps: f64, steps: usize) -> Option<State> {
        let mut x = s.x.clone();
        let mut g = s.grad.clone();
        let mut lp = s.lp;
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * eps * gi;
        }
        for step in 0..steps {
            for ((xi, pi), m) in x.iter_mut().zip(p.iter()).zip(&self.inv_metric) {
                *xi += eps * m * pi;
            }
            lp = self.target.log_density_grad(&x, &mut g);
            if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let w = if step + 1 == steps { 0.5 } else { 1.0 };
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi += w * eps * gi;
            }
        }
        Some(State { x, grad: g, lp })
    }

    /// Doubles or halves the step size until a single leapfrog step has
    /// acceptance probability near one half.
    fn reasonable_step(&self, s: &State, rng: &mut SimRng) -> f64 {
        let mut eps = 1.0;
        let accept = |eps: f64, rng: &mut SimRng| {
            let mut p = self.momentum(rng);
            let h0 = -s.lp + self.kinetic(&p);
            match self.trajectory(s, &mut p, eps, 1) {
                Some(n) => {
                    let a = (h0 - (-n.lp + self.kinetic(&p))).exp();
                    if a.is_finite() {
                        a
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            }
        };
        let mut a = accept(eps, rng);
        let up = a > 0.5;
        for _ in 0..60 {
            if (a > 0.5) != up {
                break;
            }
            eps = if up { eps * 2.0 } else { eps / 2.0 };
            a = accept(eps, rng);
        }
        eps.clamp(1e-8, 1e3)
    }
}

/// End of the metric window starting at `start`; a window that would leave
/// less than twice its length before `limit` absorbs the remainder.
fn next_window_end(start: usize, len: usize, limit: usize) -> usize {
    if start + 3 * len > limit {
        limit
    } else {
        start + len
    }
}

/// Static-trajectory HMC with a diagonal metric.
///
/// Burn-in runs dual averaging of the step size towards `target_accept`.
/// Between 15% and 90% of burn-in, the diagonal metric is re-estimated at the
/// end of each of a sequence of doubling windows, and dual averaging restarts
/// after every update; step size and metric are frozen after burn-in. Each transition jitters the step size uniformly by 10%.
pub fn hmc_sample<M: LogDensity + ?Sized>(target: &M, init: &[f64], cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let d = target.dim();
    if init.len() != d {
        return Err(Error::InvalidInput(format!("init has length {}, target dimension is {d}", init.len())));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut grad = vec![0.0; d];
    let lp = target.log_density_grad(init, &mut grad);
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut state = State { x: init.to_vec(), grad, lp };
    let mut integ = Integrator { target, inv_metric: vec![1.0; d] };

    let adapt = cfg.step_size.is_none();
    let mut eps = match cfg.step_size {
        Some(e) => e,
        None => integ.reasonable_step(&state, &mut rng),
    };
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    // Expanding metric windows between an initial fast phase (15%) and a
    // final step-size-only phase (10%).
    let metric_start = cfg.n_burn * 3 / 20;
    let metric_end = cfg.n_burn - cfg.n_burn / 10;
    let adapt_metric = adapt && metric_end >= metric_start + 20;
    let mut window_len = ((metric_end - metric_start.min(metric_end)) / 20).max(20);
    let mut window_start = metric_start;
    let mut window_end = next_window_end(window_start, window_len, metric_end);
    let mut welford = Welford::default();

    let mut out = Vec::with_capacity(cfg.n_keep() * d);
    let (mut accepted, mut divergent) = (0usize, 0usize);
    for it in 0..cfg.n_iter {
        let jitter = 1.0 + STEP_JITTER * (2.0 * rng.random::<f64>() - 1.0);
        let step = eps * jitter;
        let mut p = integ.momentum(&mut rng);
        let h0 = -state.lp + integ.kinetic(&p);
        let proposal = integ.trajectory(&state, &mut p, step, cfg.leapfrog_steps);
        let (accept_prob, next, diverged) = match proposal {
            Some(n) => {
                let dh = -n.lp + integ.kinetic(&p) - h0;
                if !dh.is_finite() || dh > MAX_ENERGY_ERROR {
                    (0.0, None, true)
                } else {
                    ((-dh).exp().min(1.0), Some(n), false)
                }
            }
            None => (0.0, None, true),
        };
        let u: f64 = rng.random();
        let take = u < accept_prob;
        if take {
            state = next.expect("accepted proposal exists");
        }

        if it < cfg.n_burn {
            if adapt {
                da.update(accept_prob);
                eps = da.current();
                if adapt_metric && it >= window_start && it < window_end {
                    welford.push(&state.x);
                }
                if adapt_metric && it + 1 == window_end {
                    integ.inv_metric = welford.regularized_var();
                    welford = Welford::default();
                    eps = integ.reasonable_step(&state, &mut rng);
                    da = DualAveraging::new(eps, cfg.target_accept);
                    window_start = window_end;
                    window_len *= 2;
                    window_end = next_window_end(window_start, window_len, metric_end);
                }
                if it + 1 == cfg.n_burn {
                    eps = da.final_step();
                }
            }
        } else {
            accepted += usize::from(take);
            divergent += usize::from(diverged);
            out.extend_from_slice(&state.x);
        }
    }

    let n_keep = cfg.n_keep() as f64;
    let rate = divergent as f64 / n_keep;
    if rate > MAX_DIVERGENCE_RATE {
        return Err(Error::Divergent { rate });
    }
    let mut draws = PosteriorDraws::new(target.param_names(), out, accepted as f64 / n_keep, cfg.seed)?;
    draws.divergences = divergent;
    log::debug!("hmc: step {eps:.4}, acceptance {:.3}, divergences {divergent}", draws.accept_rate);
    Ok(draws)
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::{emit_surface, emit_tables, emit_truth, write_json, AffineRescale, ExternalDataset};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, surface_error, AggregateReport, ModelResult, ModelTag, ParamEstimate, ReplicationReport};
use crate::inference::{
    hmc_sample, mwg_sample_shared, predict_surface, summarize_columns, BasisMean, LinearMean, PosteriorDraws,
    PredictionSurface, SharedMean,
};
use crate::models::{
    weight_covariate_fit, weighted_least_squares, coordinate_design, BasisPosterior, BasisSpatialSpec, LogDensity,
    PseudoLinearPosterior, PseudoLinearSpec, SharedProcessSpec,
};
use crate::rng::derive_seed;
use crate::sampling::{simulate_scenario1, simulate_scenario2, SampleSet, ScenarioTag, TruthSurface, SCENARIO1_BETA};
use crate::spatial::{build_basis_set, CovSpec, GpRealization, GpSimulator, RectDomain, RegularGrid, SparseBasisMatrix};
use crate::weights::{weights_from_mode, KdeConfig, WeightMode, WeightVector};

const MAX_RETRIES: u64 = 3;
const LEVEL: f64 = 0.9;
const Z90: f64 = 1.6448536269514722;

/// Weighting scheme behind each pseudo-likelihood model.
pub fn weight_mode(tag: ModelTag, samples: &SampleSet) -> WeightMode {
    match tag {
        ModelTag::UW | ModelTag::PRD => WeightMode::Unit,
        ModelTag::PEW => WeightMode::Kde,
        ModelTag::PKW => WeightMode::Known,
        ModelTag::WCR if samples.p_true.is_some() => WeightMode::Known,
        ModelTag::WCR => WeightMode::Kde,
    }
}

/// Parameter values used to score coverage.
pub fn true_params(scenario: ScenarioTag) -> Vec<(&'static str, f64)> {
    match scenario {
        ScenarioTag::Scenario1 => vec![("beta1", SCENARIO1_BETA[0]), ("beta2", SCENARIO1_BETA[1])],
        _ => vec![],
    }
}

/// One model fitted to one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutcome {
    pub model: ModelTag,
    pub params: Vec<ParamEstimate>,
    pub surface: PredictionSurface,
    /// Weights and sampling, excluding prediction.
    pub runtime_secs: f64,
    pub accept_rate: Option<f64>,
    pub min_ess: Option<f64>,
}

fn compute_weights(tag: ModelTag, samples: &SampleSet) -> Result<WeightVector> {
    let cfg = KdeConfig::default_for(&samples.locations)?;
    weights_from_mode(samples, weight_mode(tag, samples), &cfg)
}

fn estimates(draws: &PosteriorDraws, cols: &[(usize, &str)]) -> Result<(Vec<ParamEstimate>, Option<f64>)> {
    let idx: Vec<usize> = cols.iter().map(|c| c.0).collect();
    let s = summarize_columns(draws, LEVEL, &idx)?;
    let min_ess = s.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min);
    let params = s
        .params
        .iter()
        .zip(cols)
        .filter(|(_, (_, name))| !name.is_empty())
        .map(|(p, (_, name))| ParamEstimate { name: name.to_string(), mean: p.mean, lower: p.lower, upper: p.upper })
        .collect();
    Ok((params, min_ess.is_finite().then_some(min_ess)))
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

fn fit_linear(samples: &SampleSet, weights: WeightVector, cfg: &ExperimentConfig, seed: u64, grid: &RegularGrid) -> Result<FitOutcome> {
    let start = Instant::now();
    let x = coordinate_design(&samples.locations, false);
    let wls = weighted_least_squares(&x, &samples.z, &weights.normalized)?;
    let spec = PseudoLinearSpec::new(weights);
    let target = PseudoLinearPosterior::new(&spec, samples)?;
    let mut init = wls.coef.clone();
    init.push(0.5 * wls.residual_var.max(1e-6).ln());
    let draws = hmc_sample(&target, &init, &cfg.sampler.pseudo_likelihood.with_seed(seed))?;
    let runtime_secs = start.elapsed().as_secs_f64();
    let (params, min_ess) = estimates(&draws, &[(0, "beta1"), (1, "beta2"), (2, "")])?;
    let surface = predict_surface(&LinearMean { intercept: false }, &draws, grid)?;
    Ok(FitOutcome { model: ModelTag::UW, params, surface, runtime_secs, accept_rate: Some(draws.accept_rate), min_ess })
}

fn fit_basis(samples: &SampleSet, weights: WeightVector, cfg: &ExperimentConfig, seed: u64, grid: &RegularGrid) -> Result<FitOutcome> {
    let start = Instant::now();
    let basis = build_basis_set(&RectDomain::unit_square().expand(cfg.basis.expand), cfg.basis.resolutions)?
        .retain_supported(&samples.locations, cfg.basis.min_support)?;
    let k = basis.len();
    // ridge start for the coefficients
    let phi = SparseBasisMatrix::new(&samples.locations, &basis).to_dense();
    let w = &weights.normalized;
    let mut a = DMatrix::<f64>::identity(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for i in 0..samples.len() {
        let row = phi.row(i);
        a += w[i] * row.transpose() * row;
        rhs += w[i] * samples.z[i] * row.transpose();
    }
    let eta: Vec<f64> = a
        .cholesky()
        .ok_or(Error::Cholesky { jitter: 0.0 })?
        .solve(&rhs)
        .iter()
        .copied()
        .collect();

    let mut spec = BasisSpatialSpec::new(basis.clone(), weights);
    spec.parameterization = cfg.basis.parameterization;
    let target = BasisPosterior::new(&spec, samples)?;
    let init = target.pack(&eta, &vec![0.0; k], -1.0, sd(&samples.z).max(1e-3).ln());
    let draws = hmc_sample(&target, &init, &cfg.sampler.pseudo_likelihood.with_seed(seed))?;
    let runtime_secs = start.elapsed().as_secs_f64();
    let dim = target.dim();
    let (params, min_ess) = estimates(&draws, &[(dim - 2, ""), (dim - 1, "")])?;
    let surface = predict_surface(&BasisMean { basis, param: cfg.basis.parameterization }, &draws, grid)?;
    Ok(FitOutcome { model: ModelTag::UW, params, surface, runtime_secs, accept_rate: Some(draws.accept_rate), min_ess })
}

fn fit_shared(samples: &SampleSet, covariates: bool, cfg: &ExperimentConfig, seed: u64, grid: &RegularGrid) -> Result<FitOutcome> {
    let start = Instant::now();
    let mut spec = SharedProcessSpec::default_unit(covariates);
    spec.fit_grid = grid.clone();
    let draws = mwg_sample_shared(&spec, samples, &cfg.sampler.shared_process.with_seed(seed))?;
    let runtime_secs = start.elapsed().as_secs_f64();
    let col = |n: &str| draws.index_of(n).ok_or_else(|| Error::InvalidInput(format!("missing column {n}")));
    let mut cols = vec![];
    if covariates {
        cols.push((col("b1")?, "beta1"));
        cols.push((col("b2")?, "beta2"));
    } else {
        cols.push((col("mu")?, "mu"));
    }
    cols.push((col("beta")?, "preferential"));
    cols.push((col("alpha")?, ""));
    cols.push((col("log_sigma_z")?, ""));
    cols.push((col("log_sigma_gamma")?, ""));
    let (params, min_ess) = estimates(&draws, &cols)?;
    let mean = SharedMean { knots: spec.knots, kernel_sd: spec.kernel_sd, n_fixed: spec.n_fixed(), center_latent: covariates };
    let surface = predict_surface(&mean, &draws, grid)?;
    Ok(FitOutcome { model: ModelTag::PRD, params, surface, runtime_secs, accept_rate: Some(draws.accept_rate), min_ess })
}

fn fit_wcr(samples: &SampleSet, weights: WeightVector, grid: &RegularGrid) -> Result<FitOutcome> {
    let start = Instant::now();
    let f = weight_covariate_fit(samples, &weights, false)?;
    let runtime_secs = start.elapsed().as_secs_f64();
    let p = f.fit.coef.len();
    let c = |i: usize, j: usize| f.fit.cov[i * p + j];
    let se = f.fit.se();
    let params = (0..2)
        .map(|j| ParamEstimate {
            name: format!("beta{}", j + 1),
            mean: f.beta[j],
            lower: f.beta[j] - Z90 * se[j],
            upper: f.beta[j] + Z90 * se[j],
        })
        .collect();
    let mut mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for s in &grid.centers {
        let m = f.beta[0] * s.s1 + f.beta[1] * s.s2;
        let v = s.s1 * s.s1 * c(0, 0) + 2.0 * s.s1 * s.s2 * c(0, 1) + s.s2 * s.s2 * c(1, 1);
        let h = Z90 * v.max(0.0).sqrt();
        mean.push(m);
        lower.push(m - h);
        upper.push(m + h);
    }
    let surface = PredictionSurface { grid: grid.clone(), mean, lower, upper };
    Ok(FitOutcome { model: ModelTag::WCR, params, surface, runtime_secs, accept_rate: None, min_ess: None })
}

/// Fits `tag` to `samples` and predicts on `grid`. Scenario 1 data get the
/// linear trend models; everything else gets the basis expansion.
pub fn fit_model(cfg: &ExperimentConfig, tag: ModelTag, samples: &SampleSet, grid: &RegularGrid, seed: u64) -> Result<FitOutcome> {
    let linear = samples.scenario == ScenarioTag::Scenario1;
    let mut out = match tag {
        ModelTag::PRD => fit_shared(samples, linear, cfg, seed, grid)?,
        ModelTag::WCR => {
            let start = Instant::now();
            let w = compute_weights(tag, samples)?;
            let mut o = fit_wcr(samples, w, grid)?;
            o.runtime_secs = start.elapsed().as_secs_f64();
            o
        }
        _ => {
            let start = Instant::now();
            let w = compute_weights(tag, samples)?;
            let mut o = if linear { fit_linear(samples, w, cfg, seed, grid)? } else { fit_basis(samples, w, cfg, seed, grid)? };
            o.runtime_secs = start.elapsed().as_secs_f64();
            o
        }
    };
    out.model = tag;
    Ok(out)
}

/// Fits `tag` to a user dataset. With an external scenario the coordinates
/// are rescaled to the unit square and the surface is predicted on the
/// default grid there; otherwise the rows are taken as simulated data of
/// the configured scenario.
pub fn fit_dataset(cfg: &ExperimentConfig, data: &ExternalDataset, tag: ModelTag, seed: u64) -> Result<(FitOutcome, AffineRescale)> {
    let external = cfg.scenario == ScenarioTag::External;
    let mut samples = data.to_samples(external)?;
    if !external {
        samples = SampleSet::new(samples.locations, samples.z, samples.p_true, cfg.scenario)?;
    }
    if tag == ModelTag::PKW && samples.p_true.is_none() {
        return Err(Error::MissingSelectionProb);
    }
    let transform = if external { data.transform } else { AffineRescale::IDENTITY };
    let fit = fit_model(cfg, tag, &samples, &RegularGrid::default_unit(), model_seed(seed, tag))?;
    Ok((fit, transform))
}

/// Simulation context shared by all replications.
pub struct Simulator {
    gp: Option<GpSimulator>,
    fixed: Option<GpRealization>,
}

impl Simulator {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let gp = match cfg.scenario {
            ScenarioTag::Scenario2 => {
                let s = &cfg.scenario2;
                let grid = RegularGrid::new(RectDomain::unit_square(), s.grid_size, s.grid_size)?;
                Some(GpSimulator::new(grid, CovSpec::new(s.gp_amplitude, s.gp_length_scale)?)?)
            }
            _ => None,
        };
        let fixed = match &gp {
            Some(g) if cfg.scenario2.fixed_surface => Some(g.draw(derive_seed(cfg.base_seed, 0))),
            _ => None,
        };
        Ok(Self { gp, fixed })
    }

    /// Dataset and truth for one replication seed.
    pub fn simulate(&self, cfg: &ExperimentConfig, seed: u64) -> Result<(SampleSet, TruthSurface)> {
        match cfg.scenario {
            ScenarioTag::Scenario1 => {
                simulate_scenario1(cfg.scenario1.n_candidates, cfg.scenario1.noise_sd(), derive_seed(seed, 1))
            }
            ScenarioTag::Scenario2 => {
                let gp = self.gp.as_ref().expect("scenario 2 simulator");
                let drawn;
                let field = match &self.fixed {
                    Some(f) => f,
                    None => {
                        drawn = gp.draw(derive_seed(seed, 0));
                        &drawn
                    }
                };
                simulate_scenario2(field, cfg.scenario2.target_n, cfg.scenario2.noise_sd(), derive_seed(seed, 1))
            }
            ScenarioTag::External => Err(Error::Config("external data cannot be simulated".into())),
        }
    }
}

fn model_seed(seed: u64, tag: ModelTag) -> u64 {
    let k = ModelTag::ALL.iter().position(|m| *m == tag).expect("known tag") as u64;
    derive_seed(seed, 10 + k)
}

/// Everything produced by a single replication.
#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub report: ReplicationReport,
    pub fits: Vec<FitOutcome>,
    pub truth: TruthSurface,
    pub samples: SampleSet,
}

fn attempt(sim: &Simulator, cfg: &ExperimentConfig, r: usize, seed: u64) -> Result<ReplicationOutput> {
    let (samples, truth) = sim.simulate(cfg, seed)?;
    let mut fits = Vec::with_capacity(cfg.models.len());
    let mut results = Vec::with_capacity(cfg.models.len());
    for &tag in &cfg.models {
        let fit = fit_model(cfg, tag, &samples, &truth.grid, model_seed(seed, tag))?;
        let err = surface_error(&fit.surface, &truth)?;
        let mse = err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64;
        results.push(ModelResult {
            model: tag,
            params: fit.params.clone(),
            surface_mse: mse,
            surface_error: err,
            runtime_secs: fit.runtime_secs,
            accept_rate: fit.accept_rate,
            min_ess: fit.min_ess,
        });
        fits.push(fit);
    }
    let report = ReplicationReport { replication: r, seed, n_obs: samples.len(), results };
    Ok(ReplicationOutput { report, fits, truth, samples })
}

/// Replication `r` with seed `base_seed + r`; a failed attempt is redrawn
/// with a bumped seed up to three times.
pub fn run_replication(sim: &Simulator, cfg: &ExperimentConfig, r: usize) -> Result<ReplicationOutput> {
    let base = cfg.base_seed.wrapping_add(r as u64);
    let mut seed = base;
    let mut tries = 0;
    loop {
        match attempt(sim, cfg, r, seed) {
            Ok(out) => return Ok(out),
            Err(e) if tries < MAX_RETRIES => {
                tries += 1;
                seed = derive_seed(base, 1000 + tries);
                warn!("replication {r}: {e}; retrying with seed {seed}");
            }
            Err(e) => return Err(e),
        }
    }
}

/// Aggregate table rows plus the per-replication reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub aggregate: AggregateReport,
    pub replications: Vec<ReplicationReport>,
}

/// Runs every replication, aggregates and writes the outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (report, _) = run_experiment_in(cfg, &cfg.resolved_output_dir())?;
    Ok(report)
}

/// As [`run_experiment`] with an explicit output directory; returns the
/// written paths as well.
pub fn run_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<(ExperimentReport, Vec<PathBuf>)> {
    cfg.validate()?;
    if cfg.scenario == ScenarioTag::External {
        return Err(Error::Config("external data are fitted with `fit`, not replicated".into()));
    }
    let sim = Simulator::new(cfg)?;
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    info!("{:?}: {} replications on {workers} workers", cfg.scenario, cfg.n_replications);
    let outputs: Vec<ReplicationOutput> = pool.install(|| {
        (0..cfg.n_replications)
            .into_par_iter()
            .map(|r| {
                let out = run_replication(&sim, cfg, r);
                if let Ok(o) = &out {
                    info!("replication {r} done (n = {})", o.report.n_obs);
                }
                out
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let reports: Vec<ReplicationReport> = outputs.iter().map(|o| o.report.clone()).collect();
    let truths = true_params(cfg.scenario);
    let agg = aggregate(&reports, &truths)?;
    let report = ExperimentReport { config: cfg.clone(), aggregate: agg, replications: reports };

    let mut paths = emit_tables(&report.aggregate, cfg.scenario, dir)?;
    let first = &outputs[0];
    for fit in &first.fits {
        paths.push(emit_surface(&fit.surface, dir, fit.model.as_str())?);
    }
    paths.push(emit_truth(&first.truth, dir, "surface")?);
    let json = dir.join("report.json");
    write_json(&report, &json)?;
    paths.push(json);
    Ok((report, paths))
}

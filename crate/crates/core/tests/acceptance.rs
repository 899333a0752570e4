//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting. The simulation runs are shared between
//! tests and executed through the `prefsamp` binary.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use prefsamp::evaluation::ModelTag;
use prefsamp::harness::experiment::Simulator;
use prefsamp::harness::{fit_model, ExperimentConfig, ExperimentReport, SamplerSettings};
use prefsamp::inference::{ess, hmc_sample, SamplerConfig};
use prefsamp::models::{
    coordinate_design, estimating_equation_score, log_pseudo_posterior_basis, log_pseudo_posterior_linear,
    weighted_least_squares, BasisPosterior, BasisSpatialSpec, HorseshoeParam, LogDensity, PseudoLinearPosterior,
    PseudoLinearSpec,
};
use prefsamp::sampling::{inhomogeneous_ppp, simulate_scenario1, simulate_scenario2, SampleSet};
use prefsamp::spatial::{build_basis_set, evaluate_basis_matrix, CovSpec, GpSimulator, Point2, RectDomain, RegularGrid};
use prefsamp::weights::{
    kde2d_density, poststratified_mean, weights_from_mode, KdeConfig, StratifiedData, WeightMode, WeightVector,
};
use prefsamp::seeded_rng;

// Criterion 1
const UW_BETA1: (f64, f64) = (6.1, 6.7);
const UW_BETA2: (f64, f64) = (3.2, 3.8);
const UW_MAX_COVERAGE: f64 = 0.10;
const CORRECTED_MAX_ERROR: f64 = 0.35;
const CORRECTED_MIN_COVERAGE: f64 = 0.55;
// Criterion 2
const UW_MIN_MSE: f64 = 1.5;
const PKW_MAX_BIAS: f64 = 0.15;
// Criterion 3
const SCN2_UW_MSE: (f64, f64) = (0.25, 0.55);
// Criterion 4
const PL_RATIO: (f64, f64) = (0.85, 1.25);
const PRD_MIN_RATIO: f64 = 10.0;
const MATCHED_BUDGET: (usize, usize) = (12_000, 2_000);
const MATCHED_REPLICATIONS: u64 = 5;
// Criterion 5
const FD_REL_TOL: f64 = 1e-4;
const EE_TOL: f64 = 1e-8;
const WEIGHT_SUM_TOL: f64 = 1e-9;
const KDE_MASS_TOL: f64 = 1e-3;
const PROPERTY_BUDGET_SECS: f64 = 300.0;

static HEAVY: Mutex<()> = Mutex::new(());

/// Written to the process stdout directly so the line shows without
/// `--nocapture`.
fn report_line(criterion: u32, ok: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {criterion}: {} {detail}", if ok { "PASS" } else { "FAIL" }).unwrap();
    out.flush().unwrap();
}

fn work_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("prefsamp-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn reproduce(table: u8, out: &Path) -> ExperimentReport {
    let status = Command::new(env!("CARGO_BIN_EXE_prefsamp"))
        .args(["reproduce", "--table", &table.to_string(), "--output"])
        .arg(out)
        .env_remove("PREFSAMP_OUTPUT_DIR")
        .env("RUST_LOG", "warn")
        .status()
        .expect("run prefsamp");
    assert!(status.success(), "reproduce --table {table} failed");
    let json = std::fs::read_to_string(out.join("report.json")).unwrap();
    serde_json::from_str(&json).unwrap()
}

struct Run {
    dir: PathBuf,
    report: ExperimentReport,
    wall_secs: f64,
}

fn scenario1_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
        let dir = work_dir().join("table2-first");
        let t = Instant::now();
        let report = reproduce(2, &dir);
        Run { dir, report, wall_secs: t.elapsed().as_secs_f64() }
    })
}

fn scenario2_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
        let dir = work_dir().join("table3");
        let t = Instant::now();
        let report = reproduce(3, &dir);
        Run { dir, report, wall_secs: t.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion1_scenario1_parameters() {
    let run = scenario1_run();
    let agg = &run.report.aggregate;
    assert_eq!(agg.n_replications, 100);
    let param = |m: ModelTag, name: &str| {
        agg.model(m).unwrap().params.iter().find(|p| p.name == name).unwrap().clone()
    };
    let mut failures = vec![];
    let uw1 = param(ModelTag::UW, "beta1");
    let uw2 = param(ModelTag::UW, "beta2");
    if !(UW_BETA1.0..=UW_BETA1.1).contains(&uw1.mean) {
        failures.push(format!("UW beta1 mean {:.3}", uw1.mean));
    }
    if !(UW_BETA2.0..=UW_BETA2.1).contains(&uw2.mean) {
        failures.push(format!("UW beta2 mean {:.3}", uw2.mean));
    }
    for p in [&uw1, &uw2] {
        if p.coverage.unwrap() > UW_MAX_COVERAGE {
            failures.push(format!("UW {} coverage {:.2}", p.name, p.coverage.unwrap()));
        }
    }
    let mut lines = vec![format!("UW ({:.3}, {:.3}) cov ({:.2}, {:.2})", uw1.mean, uw2.mean, uw1.coverage.unwrap(), uw2.coverage.unwrap())];
    for m in [ModelTag::PEW, ModelTag::PKW] {
        let b1 = param(m, "beta1");
        let b2 = param(m, "beta2");
        for (p, truth) in [(&b1, 5.0), (&b2, 2.0)] {
            if (p.mean - truth).abs() > CORRECTED_MAX_ERROR {
                failures.push(format!("{m} {} mean {:.3}", p.name, p.mean));
            }
            if p.coverage.unwrap() < CORRECTED_MIN_COVERAGE {
                failures.push(format!("{m} {} coverage {:.2}", p.name, p.coverage.unwrap()));
            }
        }
        lines.push(format!("{m} ({:.3}, {:.3}) cov ({:.2}, {:.2})", b1.mean, b2.mean, b1.coverage.unwrap(), b2.coverage.unwrap()));
    }
    lines.push(format!("wall {:.0}s", run.wall_secs));
    let ok = failures.is_empty() && run.wall_secs <= 7200.0;
    report_line(1, ok, &format!("{}{}", lines.join("; "), if ok { String::new() } else { format!(" | {}", failures.join(", ")) }));
    assert!(ok, "{failures:?}");
}

#[test]
fn criterion2_scenario1_prediction() {
    let agg = &scenario1_run().report.aggregate;
    let mse = |m| agg.model(m).unwrap().mse;
    let (uw, pew, pkw, prd) = (mse(ModelTag::UW), mse(ModelTag::PEW), mse(ModelTag::PKW), mse(ModelTag::PRD));
    let bias = agg.model(ModelTag::PKW).unwrap().mean_abs_bias;
    let ok = uw > UW_MIN_MSE && pkw < pew && pew < prd && prd < uw && bias < PKW_MAX_BIAS;
    report_line(
        2,
        ok,
        &format!("MSE UW {uw:.3} PEW {pew:.3} PKW {pkw:.3} PRD {prd:.3}; PKW mean abs bias {bias:.3}"),
    );
    assert!(ok);
}

#[test]
fn criterion3_scenario2_ordering() {
    let agg = &scenario2_run().report.aggregate;
    assert_eq!(agg.n_replications, 100);
    let mse = |m| agg.model(m).unwrap().mse;
    let (uw, pew, pkw, prd) = (mse(ModelTag::UW), mse(ModelTag::PEW), mse(ModelTag::PKW), mse(ModelTag::PRD));
    let ordered = prd < pkw && pkw < pew && pew < uw;
    let in_band = (SCN2_UW_MSE.0..=SCN2_UW_MSE.1).contains(&uw);
    report_line(
        3,
        ordered,
        &format!(
            "MSE PRD {prd:.3} PKW {pkw:.3} PEW {pew:.3} UW {uw:.3}; UW magnitude {} [{}, {}] (reported, not gated)",
            if in_band { "inside" } else { "outside" },
            SCN2_UW_MSE.0,
            SCN2_UW_MSE.1
        ),
    );
    assert!(ordered);
}

/// UW and PRD fitted to the same Scenario 1 datasets with the same number
/// of iterations and burn-in.
fn matched_budget_ratio() -> (f64, f64, f64) {
    let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let mut cfg = ExperimentConfig::scenario1_preset();
    let budget = SamplerSettings { n_iter: MATCHED_BUDGET.0, n_burn: MATCHED_BUDGET.1, ..cfg.sampler.pseudo_likelihood.clone() };
    cfg.sampler.pseudo_likelihood = budget.clone();
    cfg.sampler.shared_process = budget;
    let sim = Simulator::new(&cfg).unwrap();
    let (mut t_uw, mut t_prd) = (0.0, 0.0);
    for r in 0..MATCHED_REPLICATIONS {
        let (s, truth) = sim.simulate(&cfg, cfg.base_seed + r).unwrap();
        t_uw += fit_model(&cfg, ModelTag::UW, &s, &truth.grid, r).unwrap().runtime_secs;
        t_prd += fit_model(&cfg, ModelTag::PRD, &s, &truth.grid, r).unwrap().runtime_secs;
    }
    (t_prd / t_uw, t_uw, t_prd)
}

#[test]
fn criterion4_runtime() {
    let mut detail = vec![];
    let mut pl_ok = true;
    for (name, run) in [("scenario 1", scenario1_run()), ("scenario 2", scenario2_run())] {
        let agg = &run.report.aggregate;
        let ratio = |m| agg.model(m).unwrap().runtime_ratio.unwrap();
        let (pew, pkw, prd) = (ratio(ModelTag::PEW), ratio(ModelTag::PKW), ratio(ModelTag::PRD));
        for r in [pew, pkw] {
            pl_ok &= (PL_RATIO.0..=PL_RATIO.1).contains(&r);
        }
        detail.push(format!("{name}: PEW {pew:.3} PKW {pkw:.3} PRD(desk budgets) {prd:.2}"));
    }
    let (prd_ratio, t_uw, t_prd) = matched_budget_ratio();
    let prd_ok = prd_ratio >= PRD_MIN_RATIO;
    detail.push(format!(
        "PRD/UW at {}/{} iterations each: {prd_ratio:.2} ({t_prd:.1}s vs {t_uw:.1}s)",
        MATCHED_BUDGET.0, MATCHED_BUDGET.1
    ));
    report_line(4, pl_ok && prd_ok, &detail.join("; "));
    assert!(pl_ok, "pseudo-likelihood runtime ratios outside {PL_RATIO:?}");
    assert!(prd_ok, "PRD runtime ratio {prd_ratio:.2} below {PRD_MIN_RATIO}");
}

#[test]
fn criterion6_determinism() {
    let first = scenario1_run();
    let second = {
        let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
        let dir = work_dir().join("table2-second");
        reproduce(2, &dir);
        dir
    };
    let mut same = true;
    for name in ["table1.csv", "table2.csv"] {
        let a = std::fs::read(first.dir.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        same &= a == b;
    }
    report_line(6, same, "table1.csv and table2.csv byte-compared across two `reproduce --table 2` runs");
    assert!(same);
}

// ---------------------------------------------------------------------
// Criterion 5: property suite

fn unweighted_linear(s: &SampleSet, x: &[f64; 3]) -> f64 {
    let sigma = x[2].exp();
    let mut lp = 0.0;
    for (p, z) in s.locations.iter().zip(&s.z) {
        let r = z - x[0] * p.s1 - x[1] * p.s2;
        lp += -0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * r * r / (sigma * sigma);
    }
    let beta_var = 10f64.sqrt();
    for b in &x[..2] {
        lp += -0.5 * (2.0 * PI * beta_var).ln() - 0.5 * b * b / beta_var;
    }
    lp + half_cauchy_log(sigma, 10.0) + x[2]
}

fn half_cauchy_log(x: f64, scale: f64) -> f64 {
    (2.0 / (PI * scale * (1.0 + (x / scale).powi(2)))).ln()
}

fn unweighted_basis(s: &SampleSet, phi: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = phi.ncols();
    let eta = DVector::from_column_slice(&x[..k]);
    let (log_tau, log_sigma) = (x[2 * k], x[2 * k + 1]);
    let (tau, sigma) = (log_tau.exp(), log_sigma.exp());
    let fit = phi * &eta;
    let mut lp = 0.0;
    for (f, z) in fit.iter().zip(&s.z) {
        lp += -0.5 * (2.0 * PI).ln() - log_sigma - 0.5 * (z - f).powi(2) / (sigma * sigma);
    }
    for j in 0..k {
        let lam = x[k + j].exp();
        let sd = lam * tau;
        lp += -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * (eta[j] / sd).powi(2);
        lp += half_cauchy_log(lam, 1.0) + x[k + j];
    }
    lp + half_cauchy_log(tau, 1.0) + log_tau + half_cauchy_log(sigma, 10.0) + log_sigma
}

fn fd_rel_error<M: LogDensity>(m: &M, x: &[f64]) -> f64 {
    let mut g = vec![0.0; m.dim()];
    m.log_density_grad(x, &mut g);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fd = (m.log_density(&up) - m.log_density(&dn)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1.0));
    }
    worst
}

struct Conjugate {
    x: DMatrix<f64>,
    y: DVector<f64>,
    noise_var: f64,
    prior_var: f64,
}

impl Conjugate {
    fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.x.ncols();
        let prec = self.x.transpose() * &self.x / self.noise_var + DMatrix::identity(p, p) / self.prior_var;
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * self.x.transpose() * &self.y / self.noise_var;
        (mean, cov)
    }
}

impl LogDensity for Conjugate {
    fn dim(&self) -> usize {
        self.x.ncols()
    }
    fn log_density_grad(&self, b: &[f64], g: &mut [f64]) -> f64 {
        let b = DVector::from_column_slice(b);
        let r = &self.y - &self.x * &b;
        let grad = self.x.transpose() * &r / self.noise_var - &b / self.prior_var;
        g.copy_from_slice(grad.as_slice());
        -0.5 * r.norm_squared() / self.noise_var - 0.5 * b.norm_squared() / self.prior_var
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn criterion5_property_suite() {
    let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks: Vec<(&str, bool)> = vec![];
    let mut rng = seeded_rng(2718);

    // unit-weight equivalence of the pseudo-likelihood log posteriors
    let (s1, _) = simulate_scenario1(1000, 0.5f64.sqrt(), 31).unwrap();
    let unit = PseudoLinearSpec::new(WeightVector::unit(s1.len()));
    let mut ok = true;
    for _ in 0..20 {
        let x = [rng.random_range(-2.0..8.0), rng.random_range(-2.0..5.0), rng.random_range(-1.5..1.0)];
        let (v, _) = log_pseudo_posterior_linear(&unit, &s1, &x).unwrap();
        let oracle = unweighted_linear(&s1, &x);
        ok &= (v - oracle).abs() <= 1e-9 * oracle.abs().max(1.0);
        // constant raw weights normalize back to unit weights
        let flat = PseudoLinearSpec::new(WeightVector::from_raw(vec![3.7; s1.len()], WeightMode::Known).unwrap());
        ok &= (log_pseudo_posterior_linear(&flat, &s1, &x).unwrap().0 - v).abs() <= 1e-9 * v.abs().max(1.0);
    }
    let gp = GpSimulator::new(RegularGrid::default_unit(), CovSpec::new(1.0, 0.5).unwrap()).unwrap();
    let (s2, _) = simulate_scenario2(&gp.draw(4), 80, 0.5f64.sqrt(), 5).unwrap();
    let basis = build_basis_set(&RectDomain::unit_square().expand(0.1), 2).unwrap();
    let phi = evaluate_basis_matrix(&s2.locations, &basis);
    let k = basis.len();
    let bspec = BasisSpatialSpec::new(basis.clone(), WeightVector::unit(s2.len()));
    assert_eq!(bspec.parameterization, HorseshoeParam::Centered);
    for _ in 0..10 {
        let x: Vec<f64> = (0..2 * k + 2)
            .map(|i| if i < k { rng.random_range(-1.0..1.0) } else { rng.random_range(-1.0..0.5) })
            .collect();
        let (v, _) = log_pseudo_posterior_basis(&bspec, &s2, &x).unwrap();
        let oracle = unweighted_basis(&s2, &phi, &x);
        ok &= (v - oracle).abs() <= 1e-9 * oracle.abs().max(1.0);
    }
    checks.push(("unit-weight equivalence", ok));

    // gradients against central differences
    let kde = KdeConfig::default_for(&s1.locations).unwrap();
    let mut worst: f64 = 0.0;
    for mode in [WeightMode::Unit, WeightMode::Known, WeightMode::Kde] {
        let w = weights_from_mode(&s1, mode, &kde).unwrap();
        let post = PseudoLinearPosterior::new(&PseudoLinearSpec::new(w), &s1).unwrap();
        for _ in 0..5 {
            let x = [rng.random_range(3.0..7.0), rng.random_range(0.0..4.0), rng.random_range(-1.0..0.5)];
            worst = worst.max(fd_rel_error(&post, &x));
        }
    }
    let kde2 = KdeConfig::default_for(&s2.locations).unwrap();
    for param in [HorseshoeParam::Centered, HorseshoeParam::NonCentered] {
        let mut spec = BasisSpatialSpec::new(basis.clone(), weights_from_mode(&s2, WeightMode::Kde, &kde2).unwrap());
        spec.parameterization = param;
        let post = BasisPosterior::new(&spec, &s2).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..2 * k + 2)
                .map(|i| if i < k { rng.random_range(-1.0..1.0) } else { rng.random_range(-1.0..0.5) })
                .collect();
            worst = worst.max(fd_rel_error(&post, &x));
        }
    }
    checks.push(("gradient vs finite differences", worst < FD_REL_TOL));

    // weighted estimating equations vanish at the WLS solution
    let x = coordinate_design(&s1.locations, false);
    let mut ee_worst: f64 = 0.0;
    for mode in [WeightMode::Unit, WeightMode::Known, WeightMode::Kde] {
        let w = weights_from_mode(&s1, mode, &kde).unwrap();
        let fit = weighted_least_squares(&x, &s1.z, &w.normalized).unwrap();
        let score = estimating_equation_score(&x, &s1.z, &w.normalized, &fit.coef);
        ee_worst = ee_worst.max(score.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    checks.push(("estimating-equation residual", ee_worst < EE_TOL));

    // normalized weights sum to n
    let mut sum_ok = true;
    for mode in [WeightMode::Unit, WeightMode::Known, WeightMode::Kde] {
        for s in [&s1, &s2] {
            let cfg = KdeConfig::default_for(&s.locations).unwrap();
            let w = weights_from_mode(s, mode, &cfg).unwrap();
            sum_ok &= (w.normalized.iter().sum::<f64>() - s.len() as f64).abs() < WEIGHT_SUM_TOL;
        }
    }
    checks.push(("normalized weights sum to n", sum_ok));

    // the KDE integrates to one: midpoint rule over a box wide enough to
    // hold the kernel tails
    let cfg = KdeConfig::new(kde.bandwidth1, kde.bandwidth2, f64::MIN_POSITIVE).unwrap();
    let pad = 6.0 * cfg.bandwidth1.max(cfg.bandwidth2);
    let m = 400;
    let box_ = RegularGrid::new(RectDomain::new(-pad, 1.0 + pad, -pad, 1.0 + pad).unwrap(), m, m).unwrap();
    let dens = kde2d_density(&s1.locations, &cfg, &box_.centers);
    let mass = dens.iter().sum::<f64>() * box_.cell_area;
    checks.push(("KDE integrates to 1", (mass - 1.0).abs() < KDE_MASS_TOL));

    // HMC recovers the conjugate regression posterior
    let n = 60;
    let xm = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
    let noise = DVector::from_fn(n, |_, _| { let e: f64 = StandardNormal.sample(&mut rng); 0.8 * e });
    let y = &xm * DVector::from_vec(vec![1.0, -2.0, 0.5]) + noise;
    let target = Conjugate { x: xm, y, noise_var: 0.64, prior_var: 4.0 };
    let (pm, pc) = target.posterior();
    let cfg = SamplerConfig { n_iter: 6000, n_burn: 1000, leapfrog_steps: 25, target_accept: 0.8, seed: 17, step_size: None };
    let draws = hmc_sample(&target, &[0.0; 3], &cfg).unwrap();
    let mut hmc_ok = true;
    for j in 0..3 {
        let col = draws.column(j);
        let e = ess(&col);
        hmc_ok &= (mean(&col) - pm[j]).abs() < 3.0 * (pc[(j, j)] / e).sqrt();
        hmc_ok &= (var(&col) - pc[(j, j)]).abs() < 3.0 * pc[(j, j)] * (2.0 / e).sqrt();
    }
    checks.push(("HMC conjugate moments within 3 MCSE", hmc_ok));

    // thinning with a constant intensity is Poisson
    let dom = RectDomain::new(0.0, 2.0, 0.0, 1.5).unwrap();
    let rate = 20.0;
    let expected = rate * dom.area();
    let reps = 2000;
    let counts: Vec<f64> = (0..reps)
        .map(|i| {
            let mut r = seeded_rng(10_000 + i);
            inhomogeneous_ppp(|_: &Point2| rate, &dom, rate, &mut r).unwrap().len() as f64
        })
        .collect();
    let (cm, cv) = (mean(&counts), var(&counts));
    let se_mean = (expected / reps as f64).sqrt();
    // sd of the sample variance of a Poisson count: sqrt((mu + 2 mu^2) / n)
    let se_var = ((expected + 2.0 * expected * expected) / reps as f64).sqrt();
    checks.push(("thinning Poisson moments", (cm - expected).abs() < 4.0 * se_mean && (cv - expected).abs() < 4.0 * se_var));

    // post-stratified mean by hand
    let strata = StratifiedData::new(vec![(100.0, 2.0), (300.0, 4.0), (600.0, 1.0)]).unwrap();
    let hand = (100.0 * 2.0 + 300.0 * 4.0 + 600.0 * 1.0) / 1000.0;
    let single = StratifiedData::new(vec![(50.0, -3.25)]).unwrap();
    checks.push((
        "poststratified mean",
        (poststratified_mean(&strata) - hand).abs() < 1e-12 && poststratified_mean(&single) == -3.25,
    ));

    let secs = start.elapsed().as_secs_f64();
    let ok = checks.iter().all(|c| c.1) && secs < PROPERTY_BUDGET_SECS;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report_line(
        5,
        ok,
        &format!(
            "{} checks in {secs:.1}s (gradient rel err {worst:.1e}, EE residual {ee_worst:.1e}, KDE mass {mass:.6}){}",
            checks.len(),
            if failed.is_empty() { String::new() } else { format!(" | failed: {failed:?}") }
        ),
    );
    assert!(ok, "{failed:?}");
}

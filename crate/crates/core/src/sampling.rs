//! Preferentially sampled datasets: the radial-thinning design (scenario 1),
//! log-Gaussian intensity sampling (scenario 2) and a generic thinning
//! sampler for inhomogeneous Poisson processes.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::spatial::{GpRealization, Point2, RectDomain, RegularGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioTag {
    Scenario1,
    Scenario2,
    External,
}

/// Observed locations and responses. `p_true` holds the selection
/// probability (scenario 1) or sampling intensity (scenario 2) when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub locations: Vec<Point2>,
    pub z: Vec<f64>,
    pub p_true: Option<Vec<f64>>,
    pub scenario: ScenarioTag,
}

impl SampleSet {
    pub fn new(
        locations: Vec<Point2>,
        z: Vec<f64>,
        p_true: Option<Vec<f64>>,
        scenario: ScenarioTag,
    ) -> Result<Self> {
        if locations.len() != z.len() {
            return Err(Error::InvalidInput(format!(
                "{} locations but {} responses",
                locations.len(),
                z.len()
            )));
        }
        if let Some(p) = &p_true {
            if p.len() != z.len() {
                return Err(Error::InvalidInput("selection probabilities length mismatch".into()));
            }
            if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput("selection probabilities must be positive".into()));
            }
            if scenario == ScenarioTag::Scenario1 && p.iter().any(|v| *v > 1.0) {
                return Err(Error::InvalidInput("selection probabilities exceed 1".into()));
            }
        } else if scenario == ScenarioTag::Scenario1 {
            return Err(Error::MissingSelectionProb);
        }
        Ok(Self { locations, z, p_true, scenario })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Centering and scaling constants applied to the selection probability
/// before it enters the scenario-1 response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    /// Sample mean and sample standard deviation (unit scale when the
    /// values have no spread).
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let center = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { center, scale }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }
}

/// Reference surface at grid centers used for scoring predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSurface {
    pub grid: RegularGrid,
    pub values: Vec<f64>,
    /// Scenario 1 only: constants used to standardize the selection term.
    pub standardization: Option<Standardization>,
}

pub const SCENARIO1_BETA: [f64; 2] = [5.0, 2.0];
pub const SCENARIO1_SELECTION_COEF: f64 = 2.0;
const MIN_KEPT: usize = 5;

/// `(1 - (s1 - 0.5)^2 - (s2 - 0.5)^2)^8`.
pub fn selection_prob_scn1(s: &Point2) -> f64 {
    let base = 1.0 - (s.s1 - 0.5).powi(2) - (s.s2 - 0.5).powi(2);
    base.powi(8)
}

/// Trend part of the scenario-1 response, `5 s1 + 2 s2`.
pub fn scenario1_trend(s: &Point2) -> f64 {
    SCENARIO1_BETA[0] * s.s1 + SCENARIO1_BETA[1] * s.s2
}

pub fn simulate_scenario1(
    n_candidates: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(SampleSet, TruthSurface)> {
    if n_candidates < 10 {
        return Err(Error::InvalidInput("scenario 1 needs at least 10 candidates".into()));
    }
    let mut rng = seeded_rng(seed);
    let candidates: Vec<Point2> =
        (0..n_candidates).map(|_| Point2::new(rng.random(), rng.random())).collect();
    scenario1_from_candidates(&candidates, noise_sd, &mut rng)
}

/// Thin `candidates` by [`selection_prob_scn1`] and generate responses
/// `5 s1 + 2 s2 + 2 p~(s) + noise`, where `p~` is the selection probability
/// standardized over the candidate set.
///
/// The truth surface holds the trend `5 s1 + 2 s2` on the 41 x 41 grid; the
/// selection term is the preferential-sampling nuisance the fitted models
/// are meant to see through.
pub fn scenario1_from_candidates<R: Rng>(
    candidates: &[Point2],
    noise_sd: f64,
    rng: &mut R,
) -> Result<(SampleSet, TruthSurface)> {
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::InvalidInput(format!("noise sd {noise_sd}: {e}")))?;
    let probs: Vec<f64> = candidates.iter().map(selection_prob_scn1).collect();
    let std = Standardization::fit(&probs);

    let mut locations = Vec::new();
    let mut z = Vec::new();
    let mut p_true = Vec::new();
    for (s, &p) in candidates.iter().zip(&probs) {
        let u: f64 = rng.random();
        if u < p {
            let eps = noise.sample(rng);
            locations.push(*s);
            z.push(scenario1_trend(s) + SCENARIO1_SELECTION_COEF * std.apply(p) + eps);
            p_true.push(p);
        }
    }
    if locations.len() < MIN_KEPT {
        return Err(Error::TooFewPoints { kept: locations.len(), min: MIN_KEPT });
    }
    let grid = RegularGrid::default_unit();
    let values = grid.centers.iter().map(scenario1_trend).collect();
    let samples = SampleSet::new(locations, z, Some(p_true), ScenarioTag::Scenario1)?;
    Ok((samples, TruthSurface { grid, values, standardization: Some(std) }))
}

/// Sample locations from the intensity `gamma * exp(p(s))`, with `p` the
/// bilinearly interpolated GP surface and `gamma` set so the expected count
/// is `target_n`; responses are `p(s)` plus Gaussian noise.
pub fn simulate_scenario2(
    gp: &GpRealization,
    target_n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(SampleSet, TruthSurface)> {
    if target_n < 10 {
        return Err(Error::InvalidInput("scenario 2 needs target_n >= 10".into()));
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::InvalidInput(format!("noise sd {noise_sd}: {e}")))?;
    let grid = &gp.grid;
    let mass: f64 = gp.values.iter().map(|v| v.exp()).sum::<f64>() * grid.cell_area;
    let gamma = target_n as f64 / mass;
    let peak = gp.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = gamma * peak.exp();
    let intensity = |s: &Point2| gamma * gp.value_at(s).exp();

    let mut rng = seeded_rng(seed);
    let locations = inhomogeneous_ppp(intensity, &grid.domain, bound, &mut rng)?;
    if locations.is_empty() {
        return Err(Error::TooFewPoints { kept: 0, min: 1 });
    }
    let mut z = Vec::with_capacity(locations.len());
    let mut lam = Vec::with_capacity(locations.len());
    for s in &locations {
        let p = gp.value_at(s);
        z.push(p + noise.sample(&mut rng));
        lam.push(gamma * p.exp());
    }
    let samples = SampleSet::new(locations, z, Some(lam), ScenarioTag::Scenario2)?;
    let truth = TruthSurface { grid: grid.clone(), values: gp.values.clone(), standardization: None };
    Ok((samples, truth))
}

/// Lewis-Shedler thinning: `Poisson(bound * area)` uniform candidates, each
/// kept with probability `intensity / bound`.
pub fn inhomogeneous_ppp<F, R>(
    intensity: F,
    domain: &RectDomain,
    bound: f64,
    rng: &mut R,
) -> Result<Vec<Point2>>
where
    F: Fn(&Point2) -> f64,
    R: Rng,
{
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidInput(format!("thinning bound must be positive, got {bound}")));
    }
    let mean = bound * domain.area();
    let count = Poisson::new(mean)
        .map_err(|e| Error::InvalidInput(format!("poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let s = Point2::new(
            domain.min1 + domain.width1() * rng.random::<f64>(),
            domain.min2 + domain.width2() * rng.random::<f64>(),
        );
        let lam = intensity(&s);
        if lam > bound * (1.0 + 1e-12) {
            return Err(Error::BoundViolated { intensity: lam, bound });
        }
        let u: f64 = rng.random();
        if u * bound < lam {
            out.push(s);
        }
    }
    Ok(out)
}

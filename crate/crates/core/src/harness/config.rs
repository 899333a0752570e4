use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ModelTag;
use crate::inference::SamplerConfig;
use crate::models::HorseshoeParam;
use crate::sampling::ScenarioTag;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PREFSAMP_OUTPUT_DIR";

/// How the configured noise level is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    #[default]
    Variance,
    Sd,
}

impl NoiseScale {
    pub fn sd(&self, noise: f64) -> f64 {
        match self {
            NoiseScale::Variance => noise.sqrt(),
            NoiseScale::Sd => noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario1Config {
    pub n_candidates: usize,
    pub noise: f64,
    pub noise_scale: NoiseScale,
}

impl Scenario1Config {
    pub fn noise_sd(&self) -> f64 {
        self.noise_scale.sd(self.noise)
    }
}

impl Default for Scenario1Config {
    fn default() -> Self {
        Self { n_candidates: 1000, noise: 0.5, noise_scale: NoiseScale::Variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario2Config {
    pub target_n: usize,
    pub gp_amplitude: f64,
    pub gp_length_scale: f64,
    /// Cells per axis of the GP and truth grid.
    pub grid_size: usize,
    /// One GP surface, drawn from `base_seed`, shared by every replication;
    /// otherwise each replication draws its own.
    pub fixed_surface: bool,
    pub noise: f64,
    pub noise_scale: NoiseScale,
}

impl Scenario2Config {
    pub fn noise_sd(&self) -> f64 {
        self.noise_scale.sd(self.noise)
    }
}

impl Default for Scenario2Config {
    fn default() -> Self {
        Self { target_n: 150, gp_amplitude: 1.0, gp_length_scale: 0.5, grid_size: 41, fixed_surface: true, noise: 0.5, noise_scale: NoiseScale::Variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub data: PathBuf,
}

/// Sampler settings without a seed; seeds are derived per replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    pub n_iter: usize,
    pub n_burn: usize,
    #[serde(default = "default_leapfrog")]
    pub leapfrog_steps: usize,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
}

fn default_leapfrog() -> usize {
    25
}

fn default_target_accept() -> f64 {
    0.8
}

impl SamplerSettings {
    pub fn with_seed(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_iter: self.n_iter,
            n_burn: self.n_burn,
            leapfrog_steps: self.leapfrog_steps,
            target_accept: self.target_accept,
            seed,
            step_size: self.step_size,
        }
    }
}

impl From<SamplerConfig> for SamplerSettings {
    fn from(c: SamplerConfig) -> Self {
        Self {
            n_iter: c.n_iter,
            n_burn: c.n_burn,
            leapfrog_steps: c.leapfrog_steps,
            target_accept: c.target_accept,
            step_size: c.step_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Samplers {
    /// UW, PEW and PKW.
    pub pseudo_likelihood: SamplerSettings,
    /// PRD.
    pub shared_process: SamplerSettings,
}

impl Default for Samplers {
    fn default() -> Self {
        Self {
            pseudo_likelihood: SamplerConfig::pseudo_likelihood(0).into(),
            shared_process: SamplerConfig::shared_process(0).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub resolutions: usize,
    /// Fraction by which the sampling domain is widened on each side.
    pub expand: f64,
    pub parameterization: HorseshoeParam,
    /// Functions whose values summed over the observations fall below
    /// this are dropped before fitting.
    pub min_support: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { resolutions: 2, expand: 0.1, parameterization: HorseshoeParam::NonCentered, min_support: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioTag,
    pub models: Vec<ModelTag>,
    pub n_replications: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Replications run concurrently; defaults to the available cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub scenario1: Scenario1Config,
    #[serde(default)]
    pub scenario2: Scenario2Config,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalConfig>,
    #[serde(default)]
    pub sampler: Samplers,
    #[serde(default)]
    pub basis: BasisConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replications == 0 {
            return Err(Error::Config("n_replications must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.models.contains(&ModelTag::PKW) && self.scenario == ScenarioTag::External {
            return Err(Error::Config("PKW needs known selection probabilities, unavailable for external data".into()));
        }
        if self.scenario == ScenarioTag::External && self.external.is_none() {
            return Err(Error::Config("external scenario needs an [external] data path".into()));
        }
        for (name, s) in [("pseudo_likelihood", &self.sampler.pseudo_likelihood), ("shared_process", &self.sampler.shared_process)] {
            s.with_seed(0).validate().map_err(|e| Error::Config(format!("sampler.{name}: {e}")))?;
        }
        let noise = match self.scenario {
            ScenarioTag::Scenario1 => Some(self.scenario1.noise),
            ScenarioTag::Scenario2 => Some(self.scenario2.noise),
            ScenarioTag::External => None,
        };
        if let Some(n) = noise {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::Config("noise must be finite and nonnegative".into()));
            }
        }
        if self.basis.resolutions == 0 {
            return Err(Error::Config("basis.resolutions must be at least 1".into()));
        }
        Ok(())
    }

    /// `output_dir`, unless overridden by the environment.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    /// Desk-scale settings behind `reproduce --table {1|2}`.
    pub fn scenario1_preset() -> Self {
        Self {
            scenario: ScenarioTag::Scenario1,
            models: vec![ModelTag::UW, ModelTag::PEW, ModelTag::PKW, ModelTag::PRD],
            n_replications: 100,
            base_seed: 2024,
            output_dir: PathBuf::from("output/scenario1"),
            workers: None,
            scenario1: Scenario1Config::default(),
            scenario2: Scenario2Config::default(),
            external: None,
            sampler: Samplers::default(),
            basis: BasisConfig::default(),
        }
    }

    /// Desk-scale settings behind `reproduce --table 3`.
    pub fn scenario2_preset() -> Self {
        Self {
            scenario: ScenarioTag::Scenario2,
            output_dir: PathBuf::from("output/scenario2"),
            ..Self::scenario1_preset()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO1: &str = r#"
scenario = "Scenario1"
models = ["UW", "PEW", "PKW", "PRD"]
n_replications = 100
base_seed = 2024
output_dir = "output/scenario1"

[scenario1]
n_candidates = 1000
noise = 0.5
noise_scale = "variance"

[sampler.pseudo_likelihood]
n_iter = 5500
n_burn = 1000

[sampler.shared_process]
n_iter = 12000
n_burn = 2000
"#;

    const SCENARIO2: &str = r#"
scenario = "Scenario2"
models = ["UW", "PEW", "PKW", "PRD"]
n_replications = 100
base_seed = 2024
output_dir = "output/scenario2"

[scenario2]
target_n = 150           # expected sample size
gp_amplitude = 1.0
gp_length_scale = 0.5
grid_size = 41           # cells per axis of the GP and truth grid
fixed_surface = true     # one surface drawn from base_seed for all replications
noise = 0.5
noise_scale = "variance"

[basis]
resolutions = 2
expand = 0.1                     # domain widened by this fraction per side
parameterization = "NonCentered" # or "Centered"
min_support = 1.0                # drop functions whose summed values at the data fall below this

[sampler.pseudo_likelihood]
n_iter = 5500
n_burn = 1000

[sampler.shared_process]
n_iter = 12000
n_burn = 2000
"#;

    #[test]
    fn parses_documented_example() {
        let cfg = ExperimentConfig::from_toml_str(SCENARIO1).unwrap();
        assert_eq!(cfg, ExperimentConfig::scenario1_preset());
        assert!((cfg.scenario1.noise_sd() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(ExperimentConfig::from_toml_str(SCENARIO2).unwrap(), ExperimentConfig::scenario2_preset());
    }

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = ExperimentConfig::scenario2_preset();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ExperimentConfig::scenario1_preset();
        cfg.n_replications = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::scenario1_preset();
        cfg.scenario = ScenarioTag::External;
        cfg.external = Some(ExternalConfig { data: "x.csv".into() });
        assert!(cfg.validate().is_err());
        cfg.models = vec![ModelTag::UW];
        assert!(cfg.validate().is_ok());
        let mut cfg = ExperimentConfig::scenario1_preset();
        cfg.sampler.shared_process.n_burn = 20_000;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("scenario = \"Scenario1\"\nbogus = 1").is_err());
    }

    #[test]
    fn noise_scale_sd() {
        assert_eq!(NoiseScale::Sd.sd(0.5), 0.5);
        assert_eq!(NoiseScale::Variance.sd(0.25), 0.5);
    }
}

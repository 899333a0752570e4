//! Replication-level scoring and aggregation across replications.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PredictionSurface;
use crate::sampling::TruthSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    /// Unweighted linear model.
    UW,
    /// Pseudo-likelihood with weights from an estimated sampling density.
    PEW,
    /// Pseudo-likelihood with known selection probabilities.
    PKW,
    /// Shared latent process model.
    PRD,
    /// Regression with the weight as a covariate.
    WCR,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [ModelTag::UW, ModelTag::PEW, ModelTag::PKW, ModelTag::PRD, ModelTag::WCR];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::UW => "UW",
            ModelTag::PEW => "PEW",
            ModelTag::PKW => "PKW",
            ModelTag::PRD => "PRD",
            ModelTag::WCR => "WCR",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelTag::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown model tag {s:?}")))
    }
}

/// Posterior mean and interval of one tracked parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelTag,
    pub params: Vec<ParamEstimate>,
    pub surface_mse: f64,
    /// `pred.mean - truth` per grid cell.
    #[serde(skip)]
    pub surface_error: Vec<f64>,
    pub runtime_secs: f64,
    pub accept_rate: Option<f64>,
    pub min_ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub replication: usize,
    pub seed: u64,
    pub n_obs: usize,
    pub results: Vec<ModelResult>,
}

impl ReplicationReport {
    pub fn result(&self, model: ModelTag) -> Option<&ModelResult> {
        self.results.iter().find(|r| r.model == model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamAggregate {
    pub name: String,
    pub truth: Option<f64>,
    pub mean: f64,
    pub coverage: Option<f64>,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: ModelTag,
    pub n_replications: usize,
    pub params: Vec<ParamAggregate>,
    pub mse: f64,
    pub mean_abs_bias: f64,
    pub mean_runtime_secs: f64,
    pub runtime_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_replications: usize,
    pub models: Vec<ModelAggregate>,
}

impl AggregateReport {
    pub fn model(&self, tag: ModelTag) -> Option<&ModelAggregate> {
        self.models.iter().find(|m| m.model == tag)
    }
}

fn check_aligned(pred: &PredictionSurface, truth: &TruthSurface) -> Result<()> {
    let (a, b) = (&pred.grid, &truth.grid);
    if a.n1 != b.n1 || a.n2 != b.n2 || a.domain != b.domain || pred.mean.len() != truth.values.len() {
        return Err(Error::InvalidInput("prediction and truth grids differ".into()));
    }
    Ok(())
}

/// `pred.mean - truth` at every grid cell.
pub fn surface_error(pred: &PredictionSurface, truth: &TruthSurface) -> Result<Vec<f64>> {
    check_aligned(pred, truth)?;
    Ok(pred.mean.iter().zip(&truth.values).map(|(p, t)| p - t).collect())
}

/// Grid average of `(pred.mean - truth)^2`.
pub fn surface_mse(pred: &PredictionSurface, truth: &TruthSurface) -> Result<f64> {
    let e = surface_error(pred, truth)?;
    Ok(e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64)
}

/// Averages the per-cell error over replications, then takes absolute
/// values and averages over the grid.
pub fn mean_abs_bias_from_errors(errors: &[&[f64]]) -> Result<f64> {
    let first = errors.first().ok_or_else(|| Error::InvalidInput("no replications".into()))?;
    let g = first.len();
    if g == 0 || errors.iter().any(|e| e.len() != g) {
        return Err(Error::InvalidInput("error vectors differ in length".into()));
    }
    let r = errors.len() as f64;
    let total: f64 = (0..g).map(|c| (errors.iter().map(|e| e[c]).sum::<f64>() / r).abs()).sum();
    Ok(total / g as f64)
}

pub fn mean_abs_bias(preds: &[PredictionSurface], truths: &[TruthSurface]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidInput("one truth surface per prediction is required".into()));
    }
    let errors: Vec<Vec<f64>> = preds.iter().zip(truths).map(|(p, t)| surface_error(p, t)).collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = errors.iter().map(Vec::as_slice).collect();
    mean_abs_bias_from_errors(&refs)
}

/// Coverage rate and mean interval width of each tracked parameter of
/// `model` whose true value is given.
pub fn coverage_and_width(
    reports: &[ReplicationReport],
    model: ModelTag,
    true_params: &[(&str, f64)],
) -> Vec<(String, f64, f64)> {
    true_params
        .iter()
        .map(|(name, truth)| {
            let mut hits = 0usize;
            let mut width = 0.0;
            let mut count = 0usize;
            for p in reports.iter().filter_map(|r| r.result(model)).flat_map(|m| m.params.iter()) {
                if p.name == *name {
                    count += 1;
                    hits += usize::from(p.lower <= *truth && *truth <= p.upper);
                    width += p.upper - p.lower;
                }
            }
            let c = count.max(1) as f64;
            (name.to_string(), hits as f64 / c, width / c)
        })
        .collect()
}

fn mean_runtime(reports: &[ReplicationReport], model: ModelTag) -> Option<f64> {
    let t: Vec<f64> = reports.iter().filter_map(|r| r.result(model)).map(|m| m.runtime_secs).collect();
    (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64)
}

/// Mean runtime of each model divided by the mean unweighted runtime.
pub fn runtime_ratio(reports: &[ReplicationReport]) -> Vec<(ModelTag, f64)> {
    let Some(base) = mean_runtime(reports, ModelTag::UW) else {
        return vec![];
    };
    ModelTag::ALL
        .into_iter()
        .filter_map(|m| {
            let t = mean_runtime(reports, m)?;
            Some((m, if m == ModelTag::UW { 1.0 } else { t / base }))
        })
        .collect()
}

/// Combines replication reports into per-model table rows.
pub fn aggregate(reports: &[ReplicationReport], true_params: &[(&str, f64)]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no replications to aggregate".into()));
    }
    let ratios = runtime_ratio(reports);
    let mut models = Vec::new();
    for tag in ModelTag::ALL {
        let results: Vec<&ModelResult> = reports.iter().filter_map(|r| r.result(tag)).collect();
        if results.is_empty() {
            continue;
        }
        let n = results.len() as f64;
        let mut names: Vec<String> = vec![];
        for p in results.iter().flat_map(|m| &m.params) {
            if !names.contains(&p.name) {
                names.push(p.name.clone());
            }
        }
        let cov = coverage_and_width(reports, tag, true_params);
        let params = names
            .into_iter()
            .map(|name| {
                let vals: Vec<&ParamEstimate> =
                    results.iter().flat_map(|m| m.params.iter()).filter(|p| p.name == name).collect();
                let k = vals.len() as f64;
                let truth = true_params.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
                let coverage = cov.iter().find(|(n, _, _)| *n == name).map(|(_, c, _)| *c).filter(|_| truth.is_some());
                ParamAggregate {
                    truth,
                    mean: vals.iter().map(|p| p.mean).sum::<f64>() / k,
                    coverage,
                    mean_width: vals.iter().map(|p| p.upper - p.lower).sum::<f64>() / k,
                    name,
                }
            })
            .collect();
        let errors: Vec<&[f64]> = results.iter().map(|m| m.surface_error.as_slice()).collect();
        let mean_abs_bias = if errors.iter().all(|e| !e.is_empty()) { mean_abs_bias_from_errors(&errors)? } else { f64::NAN };
        models.push(ModelAggregate {
            model: tag,
            n_replications: results.len(),
            params,
            mse: results.iter().map(|m| m.surface_mse).sum::<f64>() / n,
            mean_abs_bias,
            mean_runtime_secs: results.iter().map(|m| m.runtime_secs).sum::<f64>() / n,
            runtime_ratio: ratios.iter().find(|(m, _)| *m == tag).map(|(_, r)| *r),
        });
    }
    Ok(AggregateReport { n_replications: reports.len(), models })
}

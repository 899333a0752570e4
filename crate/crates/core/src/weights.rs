//! Sampling weights (unit, inverse known probability, inverse kernel density)
//! and the post-stratified mean.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SampleSet;
use crate::spatial::Point2;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightMode {
    Unit,
    Known,
    Kde,
}

/// Raw weights and their rescaled version summing to the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub mode: WeightMode,
}

impl WeightVector {
    pub fn from_raw(raw: Vec<f64>, mode: WeightMode) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("no weights".into()));
        }
        if raw.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        let n = raw.len() as f64;
        let total: f64 = raw.iter().sum();
        let normalized = raw.iter().map(|w| w * n / total).collect();
        Ok(Self { raw, normalized, mode })
    }

    pub fn unit(n: usize) -> Self {
        Self { raw: vec![1.0; n], normalized: vec![1.0; n], mode: WeightMode::Unit }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Product-Gaussian kernel settings; bandwidths are kernel standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub bandwidth1: f64,
    pub bandwidth2: f64,
    pub eval_floor: f64,
}

impl KdeConfig {
    pub fn new(bandwidth1: f64, bandwidth2: f64, eval_floor: f64) -> Result<Self> {
        if !(bandwidth1 > 0.0 && bandwidth2 > 0.0 && eval_floor > 0.0) {
            return Err(Error::InvalidInput("KDE bandwidths and floor must be positive".into()));
        }
        Ok(Self { bandwidth1, bandwidth2, eval_floor })
    }

    /// Normal-reference bandwidth per axis, with the density floor at
    /// `1e-6` of the peak kernel height divided by `n`.
    pub fn default_for(points: &[Point2]) -> Result<Self> {
        let xs: Vec<f64> = points.iter().map(|p| p.s1).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.s2).collect();
        let h1 = default_bandwidth(&xs)?;
        let h2 = default_bandwidth(&ys)?;
        let peak = 1.0 / (2.0 * PI * h1 * h2);
        Self::new(h1, h2, 1e-6 * peak / points.len() as f64)
    }
}

/// `1.06 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// With tied central values (zero IQR) the standard deviation alone is used.
pub fn default_bandwidth(coords: &[f64]) -> Result<f64> {
    if coords.len() < 2 {
        return Err(Error::InvalidInput("bandwidth needs at least two values".into()));
    }
    let sd = stats::sample_var(coords).sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroSpread);
    }
    let iqr = stats::quantile(coords, 0.75) - stats::quantile(coords, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(1.06 * spread * (coords.len() as f64).powf(-0.2))
}

pub fn kde2d_density(points: &[Point2], cfg: &KdeConfig, eval_at: &[Point2]) -> Vec<f64> {
    let (h1, h2) = (cfg.bandwidth1, cfg.bandwidth2);
    let norm = 1.0 / (2.0 * PI * h1 * h2 * points.len() as f64);
    eval_at
        .iter()
        .map(|e| {
            let sum: f64 = points
                .iter()
                .map(|p| {
                    let u = (e.s1 - p.s1) / h1;
                    let v = (e.s2 - p.s2) / h2;
                    (-0.5 * (u * u + v * v)).exp()
                })
                .sum();
            (sum * norm).max(cfg.eval_floor)
        })
        .collect()
}

/// Weights for `samples`: unit, `1 / p_true`, or the inverse kernel density
/// of the sample locations evaluated at themselves.
pub fn weights_from_mode(samples: &SampleSet, mode: WeightMode, cfg: &KdeConfig) -> Result<WeightVector> {
    match mode {
        WeightMode::Unit => Ok(WeightVector::unit(samples.len())),
        WeightMode::Known => {
            let p = samples.p_true.as_ref().ok_or(Error::MissingSelectionProb)?;
            WeightVector::from_raw(p.iter().map(|v| 1.0 / v).collect(), mode)
        }
        WeightMode::Kde => {
            let dens = kde2d_density(&samples.locations, cfg, &samples.locations);
            WeightVector::from_raw(dens.iter().map(|d| 1.0 / d).collect(), mode)
        }
    }
}

/// Post-stratification cells: `(N_c, sample mean in cell c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedData {
    cells: Vec<(f64, f64)>,
    total: f64,
}

impl StratifiedData {
    pub fn new(cells: Vec<(f64, f64)>) -> Result<Self> {
        if cells.is_empty() || cells.iter().any(|(n, z)| !(*n > 0.0) || !z.is_finite()) {
            return Err(Error::InvalidInput("cells need positive population counts".into()));
        }
        let total = cells.iter().map(|c| c.0).sum();
        Ok(Self { cells, total })
    }

    pub fn cells(&self) -> &[(f64, f64)] {
        &self.cells
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

pub fn poststratified_mean(data: &StratifiedData) -> f64 {
    data.cells.iter().map(|(n_c, zbar)| n_c / data.total * zbar).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::sampling::{simulate_scenario1, ScenarioTag};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn samples_with_p(p: Vec<f64>) -> SampleSet {
        let n = p.len();
        let locs = (0..n).map(|i| Point2::new(i as f64 * 0.1, 0.3)).collect();
        SampleSet::new(locs, vec![0.0; n], Some(p), ScenarioTag::Scenario2).unwrap()
    }

    #[test]
    fn coincident_points_peak_density() {
        let pts = vec![Point2::new(0.3, 0.6); 9];
        let cfg = KdeConfig::new(0.2, 0.05, 1e-12).unwrap();
        let d = kde2d_density(&pts, &cfg, &[Point2::new(0.3, 0.6)]);
        assert!((d[0] - 1.0 / (2.0 * PI * 0.2 * 0.05)).abs() < 1e-9);
    }

    #[test]
    fn three_point_explicit_sum() {
        let pts = [Point2::new(0.1, 0.2), Point2::new(0.5, 0.9), Point2::new(0.7, 0.4)];
        let (h1, h2) = (0.15, 0.3);
        let cfg = KdeConfig::new(h1, h2, 1e-300).unwrap();
        let e = Point2::new(0.4, 0.5);
        let phi = |x: f64, m: f64, h: f64| (-(x - m).powi(2) / (2.0 * h * h)).exp() / (h * (2.0 * PI).sqrt());
        let oracle = (phi(0.4, 0.1, h1) * phi(0.5, 0.2, h2)
            + phi(0.4, 0.5, h1) * phi(0.5, 0.9, h2)
            + phi(0.4, 0.7, h1) * phi(0.5, 0.4, h2))
            / 3.0;
        let d = kde2d_density(&pts, &cfg, &[e]);
        assert!((d[0] - oracle).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let (s, _) = simulate_scenario1(1000, 0.7, 3).unwrap();
        let cfg = KdeConfig::default_for(&s.locations).unwrap();
        let pad1 = 6.0 * cfg.bandwidth1;
        let pad2 = 6.0 * cfg.bandwidth2;
        let (lo1, hi1) = (-pad1, 1.0 + pad1);
        let (lo2, hi2) = (-pad2, 1.0 + pad2);
        let m = 300;
        let (d1, d2) = ((hi1 - lo1) / m as f64, (hi2 - lo2) / m as f64);
        let grid: Vec<Point2> = (0..m * m)
            .map(|k| Point2::new(lo1 + ((k % m) as f64 + 0.5) * d1, lo2 + ((k / m) as f64 + 0.5) * d2))
            .collect();
        let total: f64 = kde2d_density(&s.locations, &cfg, &grid).iter().sum::<f64>() * d1 * d2;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn floor_keeps_density_positive() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(0.01, 0.0)];
        let cfg = KdeConfig::new(0.01, 0.01, 1e-5).unwrap();
        let d = kde2d_density(&pts, &cfg, &[Point2::new(50.0, 50.0)]);
        assert_eq!(d[0], 1e-5);
    }

    #[test]
    fn normal_reference_bandwidth() {
        let mut rng = seeded_rng(1);
        // average over several samples to damp sampling error
        let hs: Vec<f64> = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
                default_bandwidth(&x).unwrap()
            })
            .collect();
        let h = stats::mean(&hs);
        let expect = 1.06 * 100f64.powf(-0.2);
        assert!((h / expect - 1.0).abs() < 0.05, "{h} vs {expect}");
    }

    #[test]
    fn bandwidth_scale_equivariance_and_decay() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 / 7.0).collect();
        let h = default_bandwidth(&x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 3.5 * v).collect();
        assert!((default_bandwidth(&scaled).unwrap() - 3.5 * h).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for n in [10usize, 100, 1000, 10000] {
            let v: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            let h = default_bandwidth(&v).unwrap();
            assert!(h < prev);
            prev = h;
        }
        assert!(matches!(default_bandwidth(&[2.0, 2.0, 2.0]), Err(Error::ZeroSpread)));
    }

    #[test]
    fn unit_and_constant_known_weights() {
        let s = samples_with_p(vec![0.4; 7]);
        let cfg = KdeConfig::new(0.1, 0.1, 1e-9).unwrap();
        assert!(weights_from_mode(&s, WeightMode::Unit, &cfg).unwrap().normalized.iter().all(|&w| w == 1.0));
        let k = weights_from_mode(&s, WeightMode::Known, &cfg).unwrap();
        assert!(k.normalized.iter().all(|&w| (w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn known_weights_hand_normalization() {
        let s = samples_with_p(vec![0.2, 0.8]);
        let cfg = KdeConfig::new(0.1, 0.1, 1e-9).unwrap();
        let w = weights_from_mode(&s, WeightMode::Known, &cfg).unwrap();
        assert!((w.raw[0] - 5.0).abs() < 1e-12 && (w.raw[1] - 1.25).abs() < 1e-12);
        assert!((w.normalized[0] - 1.6).abs() < 1e-12 && (w.normalized[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn known_mode_requires_probabilities() {
        let locs = vec![Point2::new(0.1, 0.1), Point2::new(0.2, 0.9)];
        let s = SampleSet::new(locs, vec![1.0, 2.0], None, ScenarioTag::External).unwrap();
        let cfg = KdeConfig::new(0.1, 0.1, 1e-9).unwrap();
        assert!(matches!(weights_from_mode(&s, WeightMode::Known, &cfg), Err(Error::MissingSelectionProb)));
    }

    #[test]
    fn known_weights_follow_selection_probability() {
        let (s, _) = simulate_scenario1(1000, 0.7, 12).unwrap();
        let cfg = KdeConfig::default_for(&s.locations).unwrap();
        let w = weights_from_mode(&s, WeightMode::Known, &cfg).unwrap();
        let raw: Vec<f64> = s.locations.iter().map(|l| 1.0 / crate::sampling::selection_prob_scn1(l)).collect();
        let expect = WeightVector::from_raw(raw, WeightMode::Known).unwrap();
        assert_eq!(w, expect);
    }

    #[test]
    fn kde_weights_upweight_sparse_points() {
        let (s, _) = simulate_scenario1(1000, 0.7, 21).unwrap();
        let cfg = KdeConfig::default_for(&s.locations).unwrap();
        let w = weights_from_mode(&s, WeightMode::Kde, &cfg).unwrap();
        let c = Point2::new(0.5, 0.5);
        let (near, far): (Vec<_>, Vec<_>) = s
            .locations
            .iter()
            .zip(&w.normalized)
            .partition(|(l, _)| l.dist(&c) < 0.2);
        let avg = |v: &[(&Point2, &f64)]| v.iter().map(|x| *x.1).sum::<f64>() / v.len() as f64;
        assert!(avg(&far) > avg(&near));
    }

    #[test]
    fn poststratified_reference_values() {
        let one = StratifiedData::new(vec![(40.0, 2.7)]).unwrap();
        assert_eq!(poststratified_mean(&one), 2.7);
        let two = StratifiedData::new(vec![(50.0, 2.0), (50.0, 4.0)]).unwrap();
        assert_eq!(two.total(), 100.0);
        assert!((poststratified_mean(&two) - 3.0).abs() < 1e-15);
        let same = StratifiedData::new(vec![(3.0, 1.5), (90.0, 1.5), (7.0, 1.5)]).unwrap();
        assert!((poststratified_mean(&same) - 1.5).abs() < 1e-15);
        assert!(StratifiedData::new(vec![(0.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn normalized_weights_sum_to_n(raw in prop::collection::vec(1e-4..1e4f64, 1..200)) {
            let w = WeightVector::from_raw(raw.clone(), WeightMode::Known).unwrap();
            let n = raw.len() as f64;
            prop_assert!((w.normalized.iter().sum::<f64>() - n).abs() < 1e-9);
        }

        #[test]
        fn normalization_is_rescale_invariant(raw in prop::collection::vec(1e-3..1e3f64, 1..100), c in 1e-3..1e3f64) {
            let a = WeightVector::from_raw(raw.clone(), WeightMode::Known).unwrap();
            let b = WeightVector::from_raw(raw.iter().map(|w| w * c).collect(), WeightMode::Known).unwrap();
            for (x, y) in a.normalized.iter().zip(&b.normalized) {
                prop_assert!((x - y).abs() < 1e-12 * x.max(1.0));
            }
        }

        #[test]
        fn poststratified_within_cell_range(cells in prop::collection::vec((0.1..1e4f64, -50.0..50.0f64), 1..20)) {
            let d = StratifiedData::new(cells.clone()).unwrap();
            let m = poststratified_mean(&d);
            let lo = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let hi = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
        }
    }
}

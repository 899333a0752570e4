//! Geometry, squared-exponential covariance, Gaussian-process simulation and
//! compactly supported bisquare basis functions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub s1: f64,
    pub s2: f64,
}

impl Point2 {
    pub const fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2 }
    }

    pub fn dist2(&self, other: &Point2) -> f64 {
        let d1 = self.s1 - other.s1;
        let d2 = self.s2 - other.s2;
        d1 * d1 + d2 * d2
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite()
    }
}

/// Axis-aligned rectangle `[min1, max1] x [min2, max2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    pub min1: f64,
    pub max1: f64,
    pub min2: f64,
    pub max2: f64,
}

impl RectDomain {
    pub fn new(min1: f64, max1: f64, min2: f64, max2: f64) -> Result<Self> {
        let ok = [min1, max1, min2, max2].iter().all(|v| v.is_finite());
        if !ok || max1 <= min1 || max2 <= min2 {
            return Err(Error::InvalidInput(format!(
                "degenerate domain [{min1}, {max1}] x [{min2}, {max2}]"
            )));
        }
        Ok(Self { min1, max1, min2, max2 })
    }

    pub const fn unit_square() -> Self {
        Self { min1: 0.0, max1: 1.0, min2: 0.0, max2: 1.0 }
    }

    pub fn width1(&self) -> f64 {
        self.max1 - self.min1
    }

    pub fn width2(&self) -> f64 {
        self.max2 - self.min2
    }

    pub fn area(&self) -> f64 {
        self.width1() * self.width2()
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.s1 >= self.min1 && p.s1 <= self.max1 && p.s2 >= self.min2 && p.s2 <= self.max2
    }

    /// Grow each side by `frac` of the corresponding width.
    pub fn expand(&self, frac: f64) -> Self {
        let e1 = frac * self.width1();
        let e2 = frac * self.width2();
        Self {
            min1: self.min1 - e1,
            max1: self.max1 + e1,
            min2: self.min2 - e2,
            max2: self.max2 + e2,
        }
    }
}

/// Regular `n1 x n2` partition of a domain, represented by its cell centers.
///
/// Centers are stored with the first axis varying fastest: the center of
/// cell `(i, j)` sits at index `j * n1 + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularGrid {
    pub domain: RectDomain,
    pub n1: usize,
    pub n2: usize,
    pub centers: Vec<Point2>,
    pub cell_area: f64,
}

impl RegularGrid {
    pub fn new(domain: RectDomain, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInput("grid needs at least one cell per axis".into()));
        }
        let d1 = domain.width1() / n1 as f64;
        let d2 = domain.width2() / n2 as f64;
        let centers = (0..n2)
            .flat_map(|j| {
                (0..n1).map(move |i| {
                    Point2::new(
                        domain.min1 + (i as f64 + 0.5) * d1,
                        domain.min2 + (j as f64 + 0.5) * d2,
                    )
                })
            })
            .collect();
        Ok(Self { domain, n1, n2, centers, cell_area: d1 * d2 })
    }

    /// The 41 x 41 grid over the unit square used for fitting and scoring.
    pub fn default_unit() -> Self {
        Self::new(RectDomain::unit_square(), 41, 41).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.domain.width1() / self.n1 as f64, self.domain.width2() / self.n2 as f64)
    }

    /// Bilinear interpolation of per-center `values` at `p`. Locations
    /// outside the hull of the centers are clamped to the nearest edge.
    pub fn bilinear(&self, values: &[f64], p: &Point2) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let (d1, d2) = self.spacing();
        let (i0, f1) = axis_cell((p.s1 - self.domain.min1) / d1 - 0.5, self.n1);
        let (j0, f2) = axis_cell((p.s2 - self.domain.min2) / d2 - 0.5, self.n2);
        let i1 = (i0 + 1).min(self.n1 - 1);
        let j1 = (j0 + 1).min(self.n2 - 1);
        let at = |i: usize, j: usize| values[j * self.n1 + i];
        (1.0 - f1) * (1.0 - f2) * at(i0, j0)
            + f1 * (1.0 - f2) * at(i1, j0)
            + (1.0 - f1) * f2 * at(i0, j1)
            + f1 * f2 * at(i1, j1)
    }
}

fn axis_cell(u: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let u = u.clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

/// Squared-exponential covariance `amplitude^2 * exp(-d^2 / (2 length_scale^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovSpec {
    pub amplitude: f64,
    pub length_scale: f64,
    /// Initial diagonal jitter; escalated by [`build_cov_matrix`] when needed.
    pub jitter: f64,
}

impl CovSpec {
    pub fn new(amplitude: f64, length_scale: f64) -> Result<Self> {
        Self::with_jitter(amplitude, length_scale, 1e-8 * amplitude * amplitude)
    }

    pub fn with_jitter(amplitude: f64, length_scale: f64, jitter: f64) -> Result<Self> {
        if !(amplitude > 0.0 && length_scale > 0.0 && jitter >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "covariance spec needs amplitude > 0, length_scale > 0, jitter >= 0 \
                 (got {amplitude}, {length_scale}, {jitter})"
            )));
        }
        Ok(Self { amplitude, length_scale, jitter })
    }

    fn max_jitter(&self) -> f64 {
        1e-4 * self.amplitude * self.amplitude
    }
}

pub fn sq_exp_cov(a: &Point2, b: &Point2, spec: &CovSpec) -> f64 {
    let l2 = spec.length_scale * spec.length_scale;
    spec.amplitude * spec.amplitude * (-a.dist2(b) / (2.0 * l2)).exp()
}

/// Gram matrix of the kernel without any jitter.
pub fn cov_matrix(points: &[Point2], spec: &CovSpec) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = sq_exp_cov(&points[i], &points[j], spec);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Jittered covariance together with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct JitteredCov {
    pub matrix: DMatrix<f64>,
    pub factor: DMatrix<f64>,
    pub jitter: f64,
}

/// Assemble the covariance at `points` and factorize it, escalating the
/// diagonal jitter by factors of ten up to `1e-4 * amplitude^2`.
pub fn build_cov_matrix(points: &[Point2], spec: &CovSpec) -> Result<JitteredCov> {
    if points.is_empty() {
        return Err(Error::InvalidInput("covariance needs at least one point".into()));
    }
    let base = cov_matrix(points, spec);
    let cap = spec.max_jitter();
    let mut jitter = spec.jitter;
    loop {
        let mut m = base.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::<f64, Dyn>::new(m.clone()) {
            return Ok(JitteredCov { matrix: m, factor: ch.unpack(), jitter });
        }
        if jitter >= cap {
            return Err(Error::Cholesky { jitter });
        }
        jitter = if jitter == 0.0 { 1e-8 * spec.amplitude * spec.amplitude } else { jitter * 10.0 };
        jitter = jitter.min(cap);
    }
}

/// A latent Gaussian surface at grid centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRealization {
    pub grid: RegularGrid,
    pub values: Vec<f64>,
    pub spec: CovSpec,
    pub seed: u64,
}

impl GpRealization {
    pub fn value_at(&self, p: &Point2) -> f64 {
        self.grid.bilinear(&self.values, p)
    }
}

/// Factorizes the grid covariance once and produces realizations per seed.
#[derive(Debug, Clone)]
pub struct GpSimulator {
    grid: RegularGrid,
    spec: CovSpec,
    factor: DMatrix<f64>,
}

impl GpSimulator {
    pub fn new(grid: RegularGrid, spec: CovSpec) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        let cov = build_cov_matrix(&grid.centers, &spec)?;
        Ok(Self { grid, spec, factor: cov.factor })
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn draw(&self, seed: u64) -> GpRealization {
        let mut rng = seeded_rng(seed);
        let xi = DVector::from_iterator(
            self.grid.len(),
            (0..self.grid.len()).map(|_| StandardNormal.sample(&mut rng)),
        );
        let values = (&self.factor * xi).iter().copied().collect();
        GpRealization { grid: self.grid.clone(), values, spec: self.spec, seed }
    }
}

pub fn simulate_gp(grid: &RegularGrid, spec: &CovSpec, seed: u64) -> Result<GpRealization> {
    Ok(GpSimulator::new(grid.clone(), *spec)?.draw(seed))
}

/// Bisquare function `(1 - (d/aperture)^2)^2` on `d < aperture`, zero outside.
pub fn bisquare(s: &Point2, center: &Point2, aperture: f64) -> f64 {
    let r2 = s.dist2(center) / (aperture * aperture);
    if r2 < 1.0 {
        let t = 1.0 - r2;
        t * t
    } else {
        0.0
    }
}

/// Multi-resolution bisquare basis. Resolution `r` is a `(4 * 2^r)`-per-axis
/// lattice of cell centers with aperture 1.5 times the lattice spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub centers: Vec<Point2>,
    pub apertures: Vec<f64>,
    pub resolution: Vec<usize>,
    pub resolutions: usize,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Keeps the functions whose values summed over `points` reach
    /// `min_mass`.
    pub fn retain_supported(&self, points: &[Point2], min_mass: f64) -> Result<BasisSet> {
        let mut out = BasisSet { centers: vec![], apertures: vec![], resolution: vec![], resolutions: self.resolutions };
        for k in 0..self.len() {
            let (c, a) = (self.centers[k], self.apertures[k]);
            let mass: f64 = points.iter().map(|p| bisquare(p, &c, a)).sum();
            if mass >= min_mass {
                out.centers.push(c);
                out.apertures.push(a);
                out.resolution.push(self.resolution[k]);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("no basis function covers the data".into()));
        }
        Ok(out)
    }
}

const COARSEST_LATTICE: usize = 4;
const APERTURE_FACTOR: f64 = 1.5;

pub fn build_basis_set(domain: &RectDomain, resolutions: usize) -> Result<BasisSet> {
    if resolutions == 0 {
        return Err(Error::InvalidInput("at least one basis resolution is required".into()));
    }
    let mut set = BasisSet { centers: vec![], apertures: vec![], resolution: vec![], resolutions };
    for r in 0..resolutions {
        let m = COARSEST_LATTICE << r;
        let lattice = RegularGrid::new(*domain, m, m)?;
        let (d1, d2) = lattice.spacing();
        let aperture = APERTURE_FACTOR * d1.max(d2);
        for c in lattice.centers {
            set.centers.push(c);
            set.apertures.push(aperture);
            set.resolution.push(r);
        }
    }
    Ok(set)
}

pub fn evaluate_basis_matrix(points: &[Point2], basis: &BasisSet) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), basis.len(), |i, k| {
        bisquare(&points[i], &basis.centers[k], basis.apertures[k])
    })
}

/// Row-compressed basis matrix holding only the nonzero bisquare values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBasisMatrix {
    pub n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseBasisMatrix {
    pub fn new(points: &[Point2], basis: &BasisSet) -> Self {
        let mut row_ptr = Vec::with_capacity(points.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for p in points {
            for (k, (c, a)) in basis.centers.iter().zip(&basis.apertures).enumerate() {
                let v = bisquare(p, c, *a);
                if v > 0.0 {
                    cols.push(k);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n_cols: basis.len(), row_ptr, cols, vals }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(k, v)| v * x[k]).sum();
        }
    }

    /// `out += A^T y`.
    pub fn add_tr_mul_vec(&self, y: &[f64], out: &mut [f64]) {
        for (i, yi) in y.iter().enumerate() {
            for (k, v) in self.row(i) {
                out[k] += v * yi;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_cols);
        for i in 0..self.n_rows() {
            for (k, v) in self.row(i) {
                m[(i, k)] = v;
            }
        }
        m
    }
}

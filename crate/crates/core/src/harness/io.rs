use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::AggregateReport;
use crate::inference::PredictionSurface;
use crate::sampling::{SampleSet, ScenarioTag, TruthSurface};
use crate::spatial::Point2;

/// Minimum number of rows for fitting a model to external data.
pub const MIN_FIT_ROWS: usize = 10;

/// Per-axis affine map `u = (x - offset) / scale` onto the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRescale {
    pub offset: [f64; 2],
    pub scale: [f64; 2],
}

impl AffineRescale {
    pub const IDENTITY: Self = Self { offset: [0.0, 0.0], scale: [1.0, 1.0] };

    pub fn forward(&self, p: &Point2) -> Point2 {
        Point2::new((p.s1 - self.offset[0]) / self.scale[0], (p.s2 - self.offset[1]) / self.scale[1])
    }

    pub fn inverse(&self, p: &Point2) -> Point2 {
        Point2::new(p.s1 * self.scale[0] + self.offset[0], p.s2 * self.scale[1] + self.offset[1])
    }
}

/// Rows read from a user CSV, with the map taking coordinates onto the
/// unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDataset {
    pub raw_locations: Vec<Point2>,
    pub z: Vec<f64>,
    pub p: Option<Vec<f64>>,
    pub transform: AffineRescale,
    pub response_transform: Option<String>,
}

impl ExternalDataset {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Samples in unit-square coordinates. With `rescale` off, the raw
    /// coordinates are used as they are.
    pub fn to_samples(&self, rescale: bool) -> Result<SampleSet> {
        if self.len() < MIN_FIT_ROWS {
            return Err(Error::TooFewPoints { kept: self.len(), min: MIN_FIT_ROWS });
        }
        let locations = if rescale {
            self.raw_locations.iter().map(|p| self.transform.forward(p)).collect()
        } else {
            self.raw_locations.clone()
        };
        SampleSet::new(locations, self.z.clone(), self.p.clone(), ScenarioTag::External)
    }
}

fn parse_field(s: &str, line: usize, col: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse { line, message: format!("column {col}: not a number: {s:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("column {col}: non-finite value") });
    }
    Ok(v)
}

/// Reads a CSV with header `x,y,z` and an optional `p` column (known
/// selection probability or intensity). Line numbers in errors count the
/// header as line 1.
pub fn ingest_csv(path: &Path) -> Result<ExternalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 1, message: format!("{other:?}") },
    })?;
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse { line: 1, message: "header must contain x, y and z".into() }),
    };
    let ip = find("p");

    let mut locs = Vec::new();
    let mut z = Vec::new();
    let mut p = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let get = |i: usize, col: &str| -> Result<f64> {
            let field = rec.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing column {col}") })?;
            parse_field(field, line, col)
        };
        locs.push(Point2::new(get(ix, "x")?, get(iy, "y")?));
        z.push(get(iz, "z")?);
        if let Some(i) = ip {
            let v = get(i, "p")?;
            if !(v > 0.0) {
                return Err(Error::Parse { line, message: "column p must be positive".into() });
            }
            p.push(v);
        }
    }
    if locs.len() < 2 {
        return Err(Error::TooFewPoints { kept: locs.len(), min: 2 });
    }
    let mut offset = [0.0; 2];
    let mut scale = [1.0; 2];
    for axis in 0..2 {
        let vals = locs.iter().map(|q| if axis == 0 { q.s1 } else { q.s2 });
        let lo = vals.clone().fold(f64::INFINITY, f64::min);
        let hi = vals.fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::ZeroSpread);
        }
        offset[axis] = lo;
        scale[axis] = hi - lo;
    }
    Ok(ExternalDataset {
        raw_locations: locs,
        z,
        p: ip.map(|_| p),
        transform: AffineRescale { offset, scale },
        response_transform: None,
    })
}

/// `%g`-style formatting with six significant digits.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Writes one CSV per table for the scenario, returning the paths.
///
/// Scenario 1 gets `table1.csv` (parameter means, coverage and interval
/// widths) and `table2.csv` (surface MSE and mean absolute bias);
/// Scenario 2 and external runs get `table3.csv` in the latter layout.
pub fn emit_tables(report: &AggregateReport, scenario: ScenarioTag, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = vec![];
    if scenario == ScenarioTag::Scenario1 {
        let names = ["beta1", "beta2"];
        let mut s = String::from("model");
        for n in names {
            s.push_str(&format!(",{n}_mean,{n}_coverage,{n}_width"));
        }
        s.push('\n');
        for m in &report.models {
            s.push_str(m.model.as_str());
            for n in names {
                match m.params.iter().find(|p| p.name == n) {
                    Some(p) => s.push_str(&format!(
                        ",{},{},{}",
                        fmt_sig6(p.mean),
                        p.coverage.map(fmt_sig6).unwrap_or_default(),
                        fmt_sig6(p.mean_width)
                    )),
                    None => s.push_str(",,,"),
                }
            }
            s.push('\n');
        }
        let p = dir.join("table1.csv");
        write_file(&p, &s)?;
        paths.push(p);
    }
    let mut s = String::from("model,mse,mean_abs_bias\n");
    for m in &report.models {
        s.push_str(&format!("{},{},{}\n", m.model, fmt_sig6(m.mse), fmt_sig6(m.mean_abs_bias)));
    }
    let name = if scenario == ScenarioTag::Scenario1 { "table2.csv" } else { "table3.csv" };
    let p = dir.join(name);
    write_file(&p, &s)?;
    paths.push(p);
    Ok(paths)
}

/// Long-format surface CSV `x,y,mean,lower,upper`, one row per grid center.
pub fn emit_surface(surface: &PredictionSurface, dir: &Path, tag: &str) -> Result<PathBuf> {
    emit_surface_mapped(surface, dir, tag, &AffineRescale::IDENTITY)
}

/// As [`emit_surface`], with grid centers mapped back through `transform`.
pub fn emit_surface_mapped(surface: &PredictionSurface, dir: &Path, tag: &str, transform: &AffineRescale) -> Result<PathBuf> {
    let mut s = String::from("x,y,mean,lower,upper\n");
    for (i, c) in surface.grid.centers.iter().enumerate() {
        let q = transform.inverse(c);
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig6(q.s1),
            fmt_sig6(q.s2),
            fmt_sig6(surface.mean[i]),
            fmt_sig6(surface.lower[i]),
            fmt_sig6(surface.upper[i])
        ));
    }
    let p = dir.join(format!("surface_{tag}.csv"));
    write_file(&p, &s)?;
    Ok(p)
}

/// Truth surface as `x,y,value`.
pub fn emit_truth(truth: &TruthSurface, dir: &Path, tag: &str) -> Result<PathBuf> {
    let mut s = String::from("x,y,value\n");
    for (c, v) in truth.grid.centers.iter().zip(&truth.values) {
        s.push_str(&format!("{},{},{}\n", fmt_sig6(c.s1), fmt_sig6(c.s2), fmt_sig6(*v)));
    }
    let p = dir.join(format!("truth_{tag}.csv"));
    write_file(&p, &s)?;
    Ok(p)
}

/// Samples as `x,y,z[,p]` at full precision, readable by [`ingest_csv`].
pub fn write_samples(samples: &SampleSet, path: &Path) -> Result<()> {
    let mut s = String::from(if samples.p_true.is_some() { "x,y,z,p\n" } else { "x,y,z\n" });
    for (i, (q, z)) in samples.locations.iter().zip(&samples.z).enumerate() {
        s.push_str(&format!("{},{},{}", q.s1, q.s2, z));
        if let Some(p) = &samples.p_true {
            s.push_str(&format!(",{}", p[i]));
        }
        s.push('\n');
    }
    write_file(path, &s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, &s)
}

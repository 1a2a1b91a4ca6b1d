//! Nested intensity model: house-density rasters times per-type log-linear
//! temporal intensities.
//!
//! For house type `k`, `λ_k(u, t) = h_k(u) · exp(θ_k · C(t))` and the total
//! intensity is the sum over types. `C(t)` is the temporal basis row: an
//! intercept, `o1` cosine/sine pairs with period 365 days, and polynomial
//! terms in wind speed, wind chill and their product.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{read_raster, RasterField, SpatialGrid};
use crate::ingest::{TemporalCovariates, DAYS_PER_YEAR};
use crate::io::write_atomic;

pub const PERIOD_DAYS: f64 = DAYS_PER_YEAR as f64;

/// Orders of the temporal basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemporalBasisSpec {
    /// Number of harmonic pairs, 1..=4.
    pub o1: u8,
    /// Wind-speed polynomial order, 0..=5; used only with `include_speed`.
    pub o2: u8,
    /// Wind-chill polynomial order, 0..=5.
    pub o3: u8,
    /// Order of the speed·chill polynomial, 0..=5; used only with `include_interaction`.
    pub o4: u8,
    pub include_speed: bool,
    pub include_interaction: bool,
}

impl TemporalBasisSpec {
    pub fn new(o1: u8, o2: u8, o3: u8, o4: u8, include_speed: bool, include_interaction: bool) -> Result<Self> {
        let spec = Self {
            o1,
            o2,
            o3,
            o4,
            include_speed,
            include_interaction,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Harmonics plus wind-chill polynomial only.
    pub fn harmonic_chill(o1: u8, o3: u8) -> Result<Self> {
        Self::new(o1, 0, o3, 0, false, false)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.o1) {
            return Err(Error::InvalidParameter(format!("o1 = {} not in 1..=4", self.o1)));
        }
        for (name, o) in [("o2", self.o2), ("o3", self.o3), ("o4", self.o4)] {
            if o > 5 {
                return Err(Error::InvalidParameter(format!("{name} = {o} not in 0..=5")));
            }
        }
        Ok(())
    }

    pub fn speed_order(&self) -> usize {
        if self.include_speed {
            self.o2 as usize
        } else {
            0
        }
    }

    pub fn interaction_order(&self) -> usize {
        if self.include_interaction {
            self.o4 as usize
        } else {
            0
        }
    }

    /// Number of coefficients `m = 1 + 2·o1 + o2·[speed] + o3 + o4·[interaction]`.
    pub fn dimension(&self) -> usize {
        1 + 2 * self.o1 as usize + self.speed_order() + self.o3 as usize + self.interaction_order()
    }

    /// Coefficient labels in canonical order.
    pub fn term_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        for j in 1..=self.o1 {
            names.push(format!("cos{j}"));
            names.push(format!("sin{j}"));
        }
        names.extend((1..=self.speed_order()).map(|p| format!("speed^{p}")));
        names.extend((1..=self.o3 as usize).map(|p| format!("chill^{p}")));
        names.extend((1..=self.interaction_order()).map(|p| format!("speed*chill^{p}")));
        names
    }

    /// Whether every term of `self` also appears in `other`.
    pub fn is_nested_in(&self, other: &Self) -> bool {
        self.o1 <= other.o1
            && self.speed_order() <= other.speed_order()
            && self.o3 <= other.o3
            && self.interaction_order() <= other.interaction_order()
    }

    /// Columns of `self`'s basis within `other`'s basis, if nested.
    pub fn positions_in(&self, other: &Self) -> Option<Vec<usize>> {
        if !self.is_nested_in(other) {
            return None;
        }
        let names = other.term_names();
        self.term_names()
            .iter()
            .map(|n| names.iter().position(|m| m == n))
            .collect()
    }
}

/// Basis row `C(t)` for time `t` (days). Covariates are read at day `⌊t⌋`.
pub fn basis_row(t: f64, cov: &TemporalCovariates, spec: &TemporalBasisSpec) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(spec.dimension());
    basis_row_into(t, cov, spec, &mut row)?;
    Ok(row)
}

pub(crate) fn basis_row_into(t: f64, cov: &TemporalCovariates, spec: &TemporalBasisSpec, row: &mut Vec<f64>) -> Result<()> {
    if !(t >= 0.0 && t < cov.t_len() as f64) {
        return Err(Error::OutOfRange(format!("day {t} outside covariate range 0..{}", cov.t_len())));
    }
    let day = t.floor() as usize;
    row.clear();
    row.push(1.0);
    for j in 1..=spec.o1 {
        let angle = 2.0 * PI * j as f64 * t / PERIOD_DAYS;
        row.push(angle.cos());
        row.push(angle.sin());
    }
    let speed = cov.wind_speed[day];
    let chill = cov.wind_chill[day];
    push_powers(row, speed, spec.speed_order());
    push_powers(row, chill, spec.o3 as usize);
    push_powers(row, speed * chill, spec.interaction_order());
    Ok(())
}

fn push_powers(row: &mut Vec<f64>, x: f64, order: usize) {
    let mut p = 1.0;
    for _ in 0..order {
        p *= x;
        row.push(p);
    }
}

/// Basis rows for days `0..cov.t_len()`, row-major.
pub fn daily_design(cov: &TemporalCovariates, spec: &TemporalBasisSpec) -> Vec<Vec<f64>> {
    (0..cov.t_len())
        .map(|d| basis_row(d as f64, cov, spec).expect("day in range"))
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp(θ · C(t))`, the intensity per house per day.
pub fn temporal_intensity(theta: &[f64], t: f64, cov: &TemporalCovariates, spec: &TemporalBasisSpec) -> Result<f64> {
    if theta.len() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: theta.len(),
        });
    }
    Ok(dot(theta, &basis_row(t, cov, spec)?).exp())
}

/// Basis and house-density raster of one house type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSpec {
    pub k: u8,
    pub basis: TemporalBasisSpec,
    pub density: RasterField,
}

/// Per-type model structure; all densities share one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    types: Vec<TypeSpec>,
}

impl ModelSpec {
    pub fn new(types: Vec<TypeSpec>) -> Result<Self> {
        let first = types
            .first()
            .ok_or_else(|| Error::InvalidParameter("model needs at least one house type".into()))?;
        let grid = first.density.grid().clone();
        let mut seen = [false; 256];
        for t in &types {
            t.basis.validate()?;
            if t.density.grid() != &grid {
                return Err(Error::GridMismatch(format!("density raster of type {} differs in grid", t.k)));
            }
            if !t.density.is_nonnegative() {
                return Err(Error::InvalidParameter(format!("density raster of type {} has negative values", t.k)));
            }
            if std::mem::replace(&mut seen[t.k as usize], true) {
                return Err(Error::InvalidParameter(format!("house type {} listed twice", t.k)));
            }
        }
        Ok(Self { types })
    }

    pub fn types(&self) -> &[TypeSpec] {
        &self.types
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.types[0].density.grid()
    }

    pub fn get(&self, k: u8) -> Result<&TypeSpec> {
        self.types
            .iter()
            .find(|t| t.k == k)
            .ok_or_else(|| Error::InvalidParameter(format!("no house type {k} in model")))
    }

    pub fn with_basis(&self, k: u8, basis: TemporalBasisSpec) -> Result<Self> {
        let mut out = self.clone();
        let t = out
            .types
            .iter_mut()
            .find(|t| t.k == k)
            .ok_or_else(|| Error::InvalidParameter(format!("no house type {k} in model")))?;
        t.basis = basis;
        Ok(out)
    }
}

/// Coefficients `θ_k` for one house type, in the canonical basis order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub k: u8,
    pub coefficients: Vec<f64>,
}

fn theta_for<'a>(thetas: &'a [ThetaVector], spec: &TypeSpec) -> Result<&'a [f64]> {
    let th = thetas
        .iter()
        .find(|th| th.k == spec.k)
        .ok_or_else(|| Error::InvalidParameter(format!("no coefficients for house type {}", spec.k)))?;
    if th.coefficients.len() != spec.basis.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.basis.dimension(),
            got: th.coefficients.len(),
        });
    }
    if th.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite coefficient for house type {}", spec.k)));
    }
    Ok(&th.coefficients)
}

/// `λ(u, t) = Σ_k h_k(u) · λ_k(t)` per m² per day.
pub fn intensity(
    u: (f64, f64),
    t: f64,
    spec: &ModelSpec,
    thetas: &[ThetaVector],
    cov: &TemporalCovariates,
) -> Result<f64> {
    let grid = spec.grid();
    let cell = grid
        .cell_of(u.0, u.1)
        .filter(|&c| grid.is_in(c))
        .ok_or_else(|| Error::OutOfRange(format!("location ({}, {}) outside the window", u.0, u.1)))?;
    let mut total = 0.0;
    for ts in spec.types() {
        let h = ts.density.get(cell);
        if h != 0.0 {
            total += h * temporal_intensity(theta_for(thetas, ts)?, t, cov, &ts.basis)?;
        }
    }
    Ok(total)
}

/// Fitted or true model: structure plus coefficients, with the daily
/// temporal intensities precomputed for `0..t_len`.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    pub spec: ModelSpec,
    pub thetas: Vec<ThetaVector>,
    /// `daily[i][d]` = λ_k(d) for `spec.types()[i]`.
    daily: Vec<Vec<f64>>,
}

impl IntensityModel {
    pub fn new(spec: ModelSpec, thetas: Vec<ThetaVector>, cov: &TemporalCovariates) -> Result<Self> {
        let daily = spec
            .types()
            .iter()
            .map(|ts| {
                let th = theta_for(&thetas, ts)?;
                Ok(daily_design(cov, &ts.basis).iter().map(|c| dot(th, c).exp()).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self { spec, thetas, daily })
    }

    pub fn t_len(&self) -> usize {
        self.daily.first().map_or(0, Vec::len)
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.spec.grid()
    }

    /// λ_k(day) for type index `i` (position in `spec.types()`).
    pub fn temporal(&self, i: usize, day: usize) -> f64 {
        self.daily[i][day]
    }

    pub fn temporal_series(&self, i: usize) -> &[f64] {
        &self.daily[i]
    }

    /// Total intensity in a cell on a day.
    pub fn at_cell(&self, cell: usize, day: usize) -> f64 {
        self.spec
            .types()
            .iter()
            .zip(&self.daily)
            .map(|(ts, d)| ts.density.get(cell) * d[day])
            .sum()
    }

    /// Intensity of one type (by index) in a cell on a day.
    pub fn type_at_cell(&self, i: usize, cell: usize, day: usize) -> f64 {
        self.spec.types()[i].density.get(cell) * self.daily[i][day]
    }

    /// Spatial raster of the total intensity on one day.
    pub fn raster(&self, day: usize) -> RasterField {
        let grid = self.grid();
        let values = (0..grid.n_cells()).map(|c| self.at_cell(c, day)).collect();
        RasterField::from_values(grid, values).expect("grid-sized")
    }

    /// Expected number of events on each day over the window.
    pub fn daily_totals(&self) -> Vec<f64> {
        let masses: Vec<f64> = self.spec.types().iter().map(|t| t.density.integral()).collect();
        (0..self.t_len())
            .map(|d| masses.iter().zip(&self.daily).map(|(m, s)| m * s[d]).sum())
            .collect()
    }

    /// Expected total count `∫∫ λ`.
    pub fn expected_count(&self) -> f64 {
        self.daily_totals().iter().sum()
    }

    /// Spatial intensity integrated over all days, per m².
    pub fn spatial_projection(&self) -> RasterField {
        let grid = self.grid();
        let sums: Vec<f64> = self.daily.iter().map(|d| d.iter().sum()).collect();
        let values = (0..grid.n_cells())
            .map(|c| {
                self.spec
                    .types()
                    .iter()
                    .zip(&sums)
                    .map(|(t, s)| t.density.get(c) * s)
                    .sum()
            })
            .collect();
        RasterField::from_values(grid, values).expect("grid-sized")
    }
}

/// JSON form of a model: orders, flags, coefficients and raster paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub types: Vec<ModelDocumentType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocumentType {
    pub k: u8,
    pub basis: TemporalBasisSpec,
    /// Raster path, relative to the document's directory unless absolute.
    pub raster: PathBuf,
    pub theta: Vec<f64>,
}

impl ModelDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = crate::io::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path.as_ref(), text.as_bytes())
    }

    /// Reads the referenced rasters and builds the model structure.
    pub fn resolve(&self, base_dir: &Path) -> Result<(ModelSpec, Vec<ThetaVector>)> {
        let mut types = Vec::new();
        let mut thetas = Vec::new();
        for t in &self.types {
            let path = if t.raster.is_absolute() { t.raster.clone() } else { base_dir.join(&t.raster) };
            types.push(TypeSpec {
                k: t.k,
                basis: t.basis,
                density: read_raster(&path)?,
            });
            thetas.push(ThetaVector {
                k: t.k,
                coefficients: t.theta.clone(),
            });
        }
        let spec = ModelSpec::new(types)?;
        for ts in spec.types() {
            theta_for(&thetas, ts)?;
        }
        Ok((spec, thetas))
    }
}

//! Second-order summaries, Monte Carlo envelopes and residual fields.
//!
//! Spatial statistics use the spatial projection of the intensity
//! (`∫ λ(u, t) dt`, per m²) and temporal ones the temporal projection
//! (`∫_W λ(u, t) du`, per day). The space-time K-function uses the full
//! intensity. Edge effects are handled by translation correction.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{smooth_points, OverlapTable, RasterField, SpatialGrid, WeightedPoint, KERNEL_RADIUS_SIGMAS};
use crate::ingest::{EventPattern, NoLeapCalendar};
use crate::io::{fmt_f64, write_atomic};
use crate::model::IntensityModel;
use crate::sim::{simulate_poisson, CellDayIntensity};
use crate::{par, rng};

pub const DEFAULT_SPATIAL_MAX_LAG: f64 = 10_000.0;
pub const DEFAULT_SPATIAL_BANDWIDTH: f64 = 500.0;
pub const DEFAULT_TEMPORAL_MAX_LAG: f64 = 100.0;
pub const DEFAULT_TEMPORAL_BANDWIDTH: f64 = 10.0;
pub const DEFAULT_KERNEL_SIGMA: f64 = 1000.0;
pub const DEFAULT_KERNEL_DAYS: f64 = 10.0;
pub const DEFAULT_N_SIM: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Spatial,
    Temporal,
}

/// `n` evenly spaced lags `max/n, 2·max/n, …, max`.
pub fn lag_grid(max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| max * i as f64 / n as f64).collect()
}

/// Default lags: 100 steps to 10 km or to 100 days.
pub fn default_lags(domain: Domain) -> (Vec<f64>, f64) {
    match domain {
        Domain::Spatial => (lag_grid(DEFAULT_SPATIAL_MAX_LAG, 100), DEFAULT_SPATIAL_BANDWIDTH),
        Domain::Temporal => (lag_grid(DEFAULT_TEMPORAL_MAX_LAG, 100), DEFAULT_TEMPORAL_BANDWIDTH),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcfEstimate {
    pub domain: Domain,
    pub bandwidth: f64,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    /// `values[i][j]` = K̂(r[i], v[j]).
    pub values: Vec<Vec<f64>>,
}

impl KEstimate {
    pub fn theoretical(r: f64, v: f64) -> f64 {
        2.0 * PI * r * r * v
    }

    /// `K̂(r_i, v_i)` for the common prefix of both grids.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.r.len().min(self.v.len())).map(|i| self.values[i][i]).collect()
    }
}

fn check_increasing(lags: &[f64], allow_zero: bool) -> Result<()> {
    if lags.is_empty() {
        return Err(Error::InvalidParameter("empty lag grid".into()));
    }
    if lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("lags must be strictly increasing".into()));
    }
    let ok = if allow_zero { lags[0] >= 0.0 } else { lags[0] > 0.0 };
    if !ok || !lags.iter().all(|l| l.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid first lag {}", lags[0])));
    }
    Ok(())
}

fn check_lambda(pattern: &EventPattern, lambda: &[f64]) -> Result<()> {
    if lambda.len() != pattern.len() {
        return Err(Error::DimensionMismatch {
            expected: pattern.len(),
            got: lambda.len(),
        });
    }
    if let Some(i) = lambda.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter(format!("intensity {} at point {i} must be positive", lambda[i])));
    }
    Ok(())
}

/// Calls `f(i, j, dx, dy, dt)` for every ordered pair `i ≠ j` with
/// `‖Δu‖ ≤ max_dist` and `|Δt| ≤ max_dt`, accumulating per-`i` results in
/// index order.
fn pair_sweep<T, F>(pattern: &EventPattern, max_dist: f64, max_dt: f64, init: impl Fn() -> T + Sync, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut T, usize, usize, f64, f64, f64) + Sync,
{
    let ev = pattern.events();
    let grid = pattern.window();
    let bin = max_dist.max(grid.cellsize);
    let nbx = ((grid.width() / bin).ceil() as usize).max(1);
    let nby = ((grid.height() / bin).ceil() as usize).max(1);
    let bin_of = |x: f64, y: f64| {
        let bx = (((x - grid.origin_x) / bin) as usize).min(nbx - 1);
        let by = (((y - grid.origin_y) / bin) as usize).min(nby - 1);
        (bx, by)
    };
    let mut bins = vec![Vec::new(); nbx * nby];
    for (i, e) in ev.iter().enumerate() {
        let (bx, by) = bin_of(e.x, e.y);
        bins[by * nbx + bx].push(i);
    }
    let d2max = max_dist * max_dist;
    par::map_range(ev.len(), |i| {
        let mut acc = init();
        let a = ev[i];
        let (bx, by) = bin_of(a.x, a.y);
        for ny in by.saturating_sub(1)..=(by + 1).min(nby - 1) {
            for nx in bx.saturating_sub(1)..=(bx + 1).min(nbx - 1) {
                for &j in &bins[ny * nbx + nx] {
                    if j == i {
                        continue;
                    }
                    let b = ev[j];
                    let (dx, dy, dt) = (b.x - a.x, b.y - a.y, b.t - a.t);
                    if dx * dx + dy * dy <= d2max && dt.abs() <= max_dt {
                        f(&mut acc, i, j, dx, dy, dt);
                    }
                }
            }
        }
        acc
    })
}

fn gaussian(x: f64, b: f64) -> f64 {
    (-0.5 * (x / b).powi(2)).exp() / (b * (2.0 * PI).sqrt())
}

/// Adds `w · k_b(r − d)` at every lag within the kernel cutoff of `d`.
fn add_kernel(acc: &mut [f64], lags: &[f64], d: f64, b: f64, w: f64) {
    let reach = KERNEL_RADIUS_SIGMAS * b;
    let lo = lags.partition_point(|&r| r < d - reach);
    let hi = lags.partition_point(|&r| r <= d + reach);
    for (a, &r) in acc[lo..hi].iter_mut().zip(&lags[lo..hi]) {
        *a += gaussian(r - d, b) * w;
    }
}

/// Kernel estimate of the pair-correlation function.
///
/// `ĝ(r) = 1/(s_d r^{d−1}) Σ_{x≠y} k_b(r − |x−y|) / (λ(x) λ(y) E(x−y))`
/// where `E` is `|W ∩ W_{x−y}|` (spatial, `s₂ = 2π`) or `t_len − |Δt|`
/// (temporal, `s₁ = 2`), and `lambda` holds the matching projected
/// intensity at each point. Gaussian kernels are cut at 6 bandwidths.
pub fn pcf(pattern: &EventPattern, lambda: &[f64], domain: Domain, lags: &[f64], bandwidth: f64) -> Result<PcfEstimate> {
    check_increasing(lags, domain == Domain::Temporal)?;
    if domain == Domain::Temporal && lags[0] == 0.0 {
        return Err(Error::InvalidParameter("the zero temporal lag is excluded".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be positive")));
    }
    check_lambda(pattern, lambda)?;
    let reach = lags[lags.len() - 1] + KERNEL_RADIUS_SIGMAS * bandwidth;
    let t_len = pattern.t_len() as f64;
    let n = lags.len();
    let sums = match domain {
        Domain::Spatial => {
            let table = OverlapTable::new(pattern.window(), reach);
            pair_sweep(pattern, reach, f64::INFINITY, || vec![0.0; n], |acc, i, j, dx, dy, _| {
                let e = table.overlap(dx, dy);
                if e <= 0.0 {
                    return;
                }
                let d = (dx * dx + dy * dy).sqrt();
                add_kernel(acc, lags, d, bandwidth, 1.0 / (lambda[i] * lambda[j] * e));
            })
        }
        Domain::Temporal => pair_sweep(pattern, f64::INFINITY, reach, || vec![0.0; n], |acc, i, j, _, _, dt| {
            let e = t_len - dt.abs();
            if e <= 0.0 {
                return;
            }
            add_kernel(acc, lags, dt.abs(), bandwidth, 1.0 / (lambda[i] * lambda[j] * e));
        }),
    };
    let mut values = vec![0.0; n];
    for row in sums {
        for (v, s) in values.iter_mut().zip(row) {
            *v += s;
        }
    }
    for (v, &r) in values.iter_mut().zip(lags) {
        *v /= match domain {
            Domain::Spatial => 2.0 * PI * r,
            Domain::Temporal => 2.0,
        };
    }
    Ok(PcfEstimate {
        domain,
        bandwidth,
        lags: lags.to_vec(),
        values,
    })
}

/// Inhomogeneous space-time K-function with translation correction
/// `|W ∩ W_{Δu}| · (t_len − |Δt|)`; `lambda` is the full intensity at
/// each point.
pub fn k_inhom(pattern: &EventPattern, lambda: &[f64], r_grid: &[f64], v_grid: &[f64]) -> Result<KEstimate> {
    check_increasing(r_grid, true)?;
    check_increasing(v_grid, true)?;
    check_lambda(pattern, lambda)?;
    let (rmax, vmax) = (r_grid[r_grid.len() - 1], v_grid[v_grid.len() - 1]);
    let table = OverlapTable::new(pattern.window(), rmax);
    let t_len = pattern.t_len() as f64;
    let (nr, nv) = (r_grid.len(), v_grid.len());
    let hists = pair_sweep(pattern, rmax, vmax, || vec![0.0; nr * nv], |acc, i, j, dx, dy, dt| {
        let e = table.overlap(dx, dy) * (t_len - dt.abs());
        if e <= 0.0 {
            return;
        }
        let d = (dx * dx + dy * dy).sqrt();
        let a = r_grid.partition_point(|&r| r < d);
        let b = v_grid.partition_point(|&v| v < dt.abs());
        if a < nr && b < nv {
            acc[a * nv + b] += 1.0 / (lambda[i] * lambda[j] * e);
        }
    });
    let mut h = vec![0.0; nr * nv];
    for row in hists {
        for (x, y) in h.iter_mut().zip(row) {
            *x += y;
        }
    }
    let mut values = vec![vec![0.0; nv]; nr];
    for a in 0..nr {
        for b in 0..nv {
            let mut v = h[a * nv + b];
            if a > 0 {
                v += values[a - 1][b];
            }
            if b > 0 {
                v += values[a][b - 1];
            }
            if a > 0 && b > 0 {
                v -= values[a - 1][b - 1];
            }
            values[a][b] = v;
        }
    }
    // Rounding in the inclusion-exclusion must not break monotonicity.
    for a in 0..nr {
        for b in 0..nv {
            let lo = [a.checked_sub(1).map(|p| values[p][b]), b.checked_sub(1).map(|q| values[a][q])]
                .into_iter()
                .flatten()
                .fold(0.0, f64::max);
            values[a][b] = values[a][b].max(lo);
        }
    }
    Ok(KEstimate {
        r: r_grid.to_vec(),
        v: v_grid.to_vec(),
        values,
    })
}

/// Separable kernel estimate `λ̂(u, t) = Ŝ(u) · M̂(t) / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelIntensity {
    /// Spatial Gaussian KDE at cell centers, per m².
    pub spatial: RasterField,
    /// Temporal Gaussian KDE at day indices, per day.
    pub temporal: Vec<f64>,
    pub n: usize,
}

impl KernelIntensity {
    pub fn at_cell(&self, cell: usize, day: usize) -> f64 {
        self.spatial.get(cell) * self.temporal[day] / self.n as f64
    }

    pub fn at(&self, x: f64, y: f64, t: f64) -> Option<f64> {
        let s = self.spatial.value_at(x, y)?;
        let m = *self.temporal.get(t.floor() as usize)?;
        Some(s * m / self.n as f64)
    }

    /// `∫ λ̂ dt` at a location, per m².
    pub fn spatial_projection(&self, x: f64, y: f64) -> Option<f64> {
        let total: f64 = self.temporal.iter().sum();
        Some(self.spatial.value_at(x, y)? * total / self.n as f64)
    }

    /// `∫_W λ̂ du` on a day.
    pub fn temporal_projection(&self, day: usize) -> f64 {
        self.spatial.integral() * self.temporal[day] / self.n as f64
    }
}

impl CellDayIntensity for KernelIntensity {
    fn at(&self, cell: usize, day: usize) -> f64 {
        self.at_cell(cell, day)
    }
}

pub fn kernel_intensity_estimate(pattern: &EventPattern, spatial_sigma: f64, temporal_bandwidth: f64) -> Result<KernelIntensity> {
    if pattern.is_empty() {
        return Err(Error::InvalidParameter("kernel intensity of an empty pattern".into()));
    }
    if !(temporal_bandwidth > 0.0 && temporal_bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!("temporal bandwidth {temporal_bandwidth} must be positive")));
    }
    let points: Vec<WeightedPoint> = pattern.events().iter().map(|e| WeightedPoint::new(e.x, e.y, 1.0)).collect();
    let spatial = smooth_points(&points, pattern.window(), spatial_sigma)?;
    let reach = KERNEL_RADIUS_SIGMAS * temporal_bandwidth;
    let mut temporal = vec![0.0; pattern.t_len()];
    for e in pattern.events() {
        let lo = (e.t - reach).ceil().max(0.0) as usize;
        let hi = ((e.t + reach).floor() as usize).min(pattern.t_len().saturating_sub(1));
        for (d, m) in temporal.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *m += gaussian(d as f64 - e.t, temporal_bandwidth);
        }
    }
    Ok(KernelIntensity {
        spatial,
        temporal,
        n: pattern.len(),
    })
}

/// Intensities at the points of `pattern` for a statistic's domain.
pub trait PointIntensity {
    /// Full `λ(u, t)` at each point.
    fn full(&self, pattern: &EventPattern) -> Result<Vec<f64>>;
    /// Projection matching `domain` at each point.
    fn projected(&self, pattern: &EventPattern, domain: Domain) -> Result<Vec<f64>>;
}

fn cell_at(grid: &SpatialGrid, x: f64, y: f64) -> Result<usize> {
    grid.cell_of(x, y)
        .filter(|&c| grid.is_in(c))
        .ok_or_else(|| Error::OutOfRange(format!("point ({x}, {y}) outside the window")))
}

impl PointIntensity for IntensityModel {
    fn full(&self, pattern: &EventPattern) -> Result<Vec<f64>> {
        pattern
            .events()
            .iter()
            .map(|e| Ok(self.at_cell(cell_at(self.grid(), e.x, e.y)?, e.day())))
            .collect()
    }

    fn projected(&self, pattern: &EventPattern, domain: Domain) -> Result<Vec<f64>> {
        match domain {
            Domain::Spatial => {
                let proj = self.spatial_projection();
                pattern
                    .events()
                    .iter()
                    .map(|e| Ok(proj.get(cell_at(self.grid(), e.x, e.y)?)))
                    .collect()
            }
            Domain::Temporal => {
                let totals = self.daily_totals();
                Ok(pattern.events().iter().map(|e| totals[e.day()]).collect())
            }
        }
    }
}

impl PointIntensity for KernelIntensity {
    fn full(&self, pattern: &EventPattern) -> Result<Vec<f64>> {
        pattern
            .events()
            .iter()
            .map(|e| self.at(e.x, e.y, e.t).ok_or_else(|| Error::OutOfRange("point outside the estimate".into())))
            .collect()
    }

    fn projected(&self, pattern: &EventPattern, domain: Domain) -> Result<Vec<f64>> {
        pattern
            .events()
            .iter()
            .map(|e| match domain {
                Domain::Spatial => self
                    .spatial_projection(e.x, e.y)
                    .ok_or_else(|| Error::OutOfRange("point outside the estimate".into())),
                Domain::Temporal => Ok(self.temporal_projection(e.day())),
            })
            .collect()
    }
}

/// Summary statistic used by the envelope test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    /// K̂ along its diagonal `(r_i, v_i)`.
    Kfun { r: Vec<f64>, v: Vec<f64> },
    Pcf { domain: Domain, lags: Vec<f64>, bandwidth: f64 },
}

impl Statistic {
    pub fn default_kfun() -> Self {
        Self::Kfun {
            r: lag_grid(10_000.0, 100),
            v: lag_grid(100.0, 100),
        }
    }

    pub fn lags(&self) -> Vec<f64> {
        match self {
            Self::Kfun { r, v } => r[..r.len().min(v.len())].to_vec(),
            Self::Pcf { lags, .. } => lags.clone(),
        }
    }

    /// Curve for a pattern with the given point intensities.
    pub fn curve(&self, pattern: &EventPattern, intensity: &dyn PointIntensity) -> Result<Vec<f64>> {
        match self {
            Self::Kfun { r, v } => Ok(k_inhom(pattern, &intensity.full(pattern)?, r, v)?.diagonal()),
            Self::Pcf { domain, lags, bandwidth } => {
                Ok(pcf(pattern, &intensity.projected(pattern, *domain)?, *domain, lags, *bandwidth)?.values)
            }
        }
    }

    /// Curve with a kernel plug-in intensity estimated from the pattern
    /// itself; patterns with fewer than two points give a zero curve.
    pub fn curve_kernel(&self, pattern: &EventPattern, spatial_sigma: f64, temporal_bandwidth: f64) -> Result<Vec<f64>> {
        if pattern.len() < 2 {
            return Ok(vec![0.0; self.lags().len()]);
        }
        let est = kernel_intensity_estimate(pattern, spatial_sigma, temporal_bandwidth)?;
        self.curve(pattern, &est)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub n_sim: usize,
    pub statistic: Statistic,
    pub spatial_sigma: f64,
    pub temporal_bandwidth: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            n_sim: DEFAULT_N_SIM,
            statistic: Statistic::default_kfun(),
            spatial_sigma: DEFAULT_KERNEL_SIGMA,
            temporal_bandwidth: DEFAULT_KERNEL_DAYS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lags: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub observed: Vec<f64>,
    /// Observed curve lies within `[lower, upper]` at every lag.
    pub inside: bool,
}

/// Pointwise min/max envelope of the statistic over `n_sim` simulations of
/// `intensity`, each summarized with a kernel plug-in intensity as is the
/// observed pattern.
pub fn envelope_test(
    intensity: &dyn CellDayIntensity,
    grid: &SpatialGrid,
    t_len: usize,
    observed: &EventPattern,
    cfg: &EnvelopeConfig,
    seed: u64,
) -> Result<Envelope> {
    if cfg.n_sim < 1 {
        return Err(Error::InvalidParameter("n_sim must be at least 1".into()));
    }
    let obs = cfg.statistic.curve_kernel(observed, cfg.spatial_sigma, cfg.temporal_bandwidth)?;
    let curves = par::map_range(cfg.n_sim, |s| -> Result<Vec<f64>> {
        let p = simulate_poisson(intensity, grid, t_len, 1, rng::derive_seed(seed, &[rng::tag::ENVELOPE, s as u64]))?;
        cfg.statistic.curve_kernel(&p, cfg.spatial_sigma, cfg.temporal_bandwidth)
    });
    let mut lower = vec![f64::INFINITY; obs.len()];
    let mut upper = vec![f64::NEG_INFINITY; obs.len()];
    for c in curves {
        for (i, v) in c?.into_iter().enumerate() {
            lower[i] = lower[i].min(v);
            upper[i] = upper[i].max(v);
        }
    }
    let inside = obs.iter().zip(lower.iter().zip(&upper)).all(|(o, (lo, hi))| lo <= o && o <= hi);
    Ok(Envelope {
        lags: cfg.statistic.lags(),
        lower,
        upper,
        observed: obs,
        inside,
    })
}

/// Smoothed expected counts minus smoothed observed points, per m².
///
/// Both fields use the same truncated Gaussian point kernel: each cell's
/// expected count `∫ λ dt · area` is placed at the cell center.
pub fn residuals_spatial(model: &IntensityModel, pattern: &EventPattern, sigma: f64) -> Result<RasterField> {
    let grid = model.grid();
    if pattern.window() != grid {
        return Err(Error::GridMismatch("pattern window differs from the model grid".into()));
    }
    let proj = model.spatial_projection();
    let expected: Vec<WeightedPoint> = grid
        .masked_cells()
        .map(|c| {
            let (x, y) = grid.center(c);
            WeightedPoint::new(x, y, proj.get(c) * grid.cell_area())
        })
        .collect();
    let observed: Vec<WeightedPoint> = pattern.events().iter().map(|e| WeightedPoint::new(e.x, e.y, 1.0)).collect();
    smooth_points(&expected, grid, sigma)?.zip_with(&smooth_points(&observed, grid, sigma)?, |a, b| a - b)
}

pub const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthResidual {
    pub year: i32,
    pub month: u32,
    pub predicted: f64,
    pub observed: usize,
    /// Predicted minus observed.
    pub residual: f64,
    /// All days of the month fall inside the series.
    pub complete: bool,
}

/// Monthly predicted minus observed counts on the 365-day calendar. Day 0
/// is the calendar origin, or 1 January of year 0 without a calendar.
pub fn residuals_temporal(
    daily_predicted: &[f64],
    pattern: &EventPattern,
    calendar: Option<&NoLeapCalendar>,
) -> Result<Vec<MonthResidual>> {
    if daily_predicted.len() != pattern.t_len() {
        return Err(Error::DimensionMismatch {
            expected: pattern.t_len(),
            got: daily_predicted.len(),
        });
    }
    use chrono::Datelike;
    let month_of = |d: usize| -> (i32, u32) {
        match calendar {
            Some(c) => {
                let date = c.date_of(d as i64);
                (date.year(), date.month())
            }
            None => {
                let (year, mut doy) = ((d / 365) as i32, d % 365);
                let mut m = 0;
                while doy >= MONTH_DAYS[m] {
                    doy -= MONTH_DAYS[m];
                    m += 1;
                }
                (year, m as u32 + 1)
            }
        }
    };
    let counts = pattern.counts_per_day();
    let mut out: Vec<(MonthResidual, usize)> = Vec::new();
    for (d, &pred) in daily_predicted.iter().enumerate() {
        let (year, month) = month_of(d);
        match out.last_mut() {
            Some((m, days)) if m.year == year && m.month == month => {
                m.predicted += pred;
                m.observed += counts[d];
                *days += 1;
            }
            _ => out.push((
                MonthResidual {
                    year,
                    month,
                    predicted: pred,
                    observed: counts[d],
                    residual: 0.0,
                    complete: false,
                },
                1,
            )),
        }
    }
    Ok(out
        .into_iter()
        .map(|(mut m, days)| {
            m.residual = m.predicted - m.observed as f64;
            m.complete = days == MONTH_DAYS[m.month as usize - 1];
            m
        })
        .collect())
}

pub fn format_curve(lags: &[f64], values: &[f64]) -> String {
    let mut out = String::from("lag,value\n");
    for (l, v) in lags.iter().zip(values) {
        out.push_str(&format!("{},{}\n", fmt_f64(*l), fmt_f64(*v)));
    }
    out
}

pub fn format_k(k: &KEstimate) -> String {
    let mut out = String::from("r,v,value\n");
    for (i, r) in k.r.iter().enumerate() {
        for (j, v) in k.v.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", fmt_f64(*r), fmt_f64(*v), fmt_f64(k.values[i][j])));
        }
    }
    out
}

pub fn format_envelope(e: &Envelope) -> String {
    let mut out = String::from("lag,lo,hi,observed\n");
    for i in 0..e.lags.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(e.lags[i]),
            fmt_f64(e.lower[i]),
            fmt_f64(e.upper[i]),
            fmt_f64(e.observed[i])
        ));
    }
    out
}

pub fn format_monthly(rows: &[MonthResidual]) -> String {
    let mut out = String::from("year,month,predicted,observed,residual,complete\n");
    for m in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.year,
            m.month,
            fmt_f64(m.predicted),
            m.observed,
            fmt_f64(m.residual),
            m.complete
        ));
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_atomic(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::translation_overlap;
    use crate::ingest::Event;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(10, 10, 0.0, 0.0, 100.0).unwrap()
    }

    fn pattern(points: &[(f64, f64, f64)], t_len: usize) -> EventPattern {
        EventPattern::new(
            points.iter().map(|&(x, y, t)| Event { x, y, t, k: 1 }).collect(),
            &grid(),
            t_len,
        )
        .unwrap()
    }

    #[test]
    fn default_lag_ranges() {
        let (s, bs) = default_lags(Domain::Spatial);
        let (t, bt) = default_lags(Domain::Temporal);
        assert_eq!((s[s.len() - 1], bs, t[t.len() - 1], bt), (10_000.0, 500.0, 100.0, 10.0));
    }

    #[test]
    fn theoretical_k_value() {
        assert!((KEstimate::theoretical(100.0, 10.0) - 6.283185307179586e5).abs() < 1e-6);
    }

    #[test]
    fn two_point_k_by_hand() {
        let p = pattern(&[(300.0, 300.0, 3.0), (350.0, 300.0, 5.0)], 20);
        let lam0 = 1e-3;
        let k = k_inhom(&p, &[lam0, lam0], &[25.0, 50.0, 200.0], &[1.0, 2.0, 10.0]).unwrap();
        // 50 m shift on a 1000 m square: 950 m × 1000 m overlap; 18 days.
        let vc = 950.0 * 1000.0 * 18.0;
        assert!((translation_overlap(&grid(), (50.0, 0.0)) - 950.0 * 1000.0).abs() < 1e-6);
        let expect = 2.0 / (lam0 * lam0 * vc);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i >= 1 && j >= 1 { expect } else { 0.0 };
                assert!((k.values[i][j] - want).abs() <= 1e-12 * expect, "{i} {j}");
            }
        }
    }

    #[test]
    fn empty_and_single_point_statistics_vanish() {
        let e = pattern(&[], 10);
        let k = k_inhom(&e, &[], &[100.0], &[1.0]).unwrap();
        assert_eq!(k.values, vec![vec![0.0]]);
        let one = pattern(&[(10.0, 10.0, 1.0)], 10);
        let g = pcf(&one, &[1e-4], Domain::Spatial, &[100.0, 200.0], 50.0).unwrap();
        assert_eq!(g.values, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_lag_and_zero_intensity_rejected() {
        let p = pattern(&[(10.0, 10.0, 1.0), (20.0, 20.0, 2.0)], 10);
        assert!(pcf(&p, &[1.0, 1.0], Domain::Spatial, &[0.0, 1.0], 1.0).is_err());
        assert!(pcf(&p, &[1.0, 0.0], Domain::Spatial, &[1.0], 1.0).is_err());
    }

    #[test]
    fn statistics_invariant_under_reordering() {
        let pts = [(110.0, 120.0, 1.0), (400.0, 500.0, 3.0), (420.0, 530.0, 4.0), (900.0, 50.0, 8.0), (130.0, 90.0, 2.0)];
        let lam = [1e-5, 2e-5, 3e-5, 1e-5, 2e-5];
        let mut rev = pts;
        rev.reverse();
        let mut lrev = lam;
        lrev.reverse();
        let (a, b) = (pattern(&pts, 10), pattern(&rev, 10));
        let ka = k_inhom(&a, &lam, &[100.0, 500.0, 1000.0], &[1.0, 5.0]).unwrap();
        let kb = k_inhom(&b, &lrev, &[100.0, 500.0, 1000.0], &[1.0, 5.0]).unwrap();
        for (x, y) in ka.values.iter().flatten().zip(kb.values.iter().flatten()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let ga = pcf(&a, &lam, Domain::Temporal, &[1.0, 2.0, 3.0], 1.0).unwrap();
        let gb = pcf(&b, &lrev, Domain::Temporal, &[1.0, 2.0, 3.0], 1.0).unwrap();
        for (x, y) in ga.values.iter().zip(&gb.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_estimate_mass_linearity_and_translation() {
        let big = SpatialGrid::new(40, 40, 0.0, 0.0, 100.0).unwrap();
        let one = EventPattern::new(vec![Event { x: 2000.0, y: 2000.0, t: 50.0, k: 1 }], &big, 100).unwrap();
        let est = kernel_intensity_estimate(&one, 300.0, 5.0).unwrap();
        let mass: f64 = (0..big.n_cells()).map(|c| (0..100).map(|d| est.at_cell(c, d)).sum::<f64>()).sum::<f64>()
            * big.cell_area();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        let two = EventPattern::merged(&[one.clone(), one.clone()]).unwrap();
        let est2 = kernel_intensity_estimate(&two, 300.0, 5.0).unwrap();
        assert!((est2.at(2010.0, 1990.0, 48.0).unwrap() - 2.0 * est.at(2010.0, 1990.0, 48.0).unwrap()).abs() < 1e-18);
        let moved = EventPattern::new(vec![Event { x: 2500.0, y: 2300.0, t: 52.0, k: 1 }], &big, 100).unwrap();
        let est3 = kernel_intensity_estimate(&moved, 300.0, 5.0).unwrap();
        let (a, b) = (est.at(1850.0, 2150.0, 47.0).unwrap(), est3.at(2350.0, 2450.0, 49.0).unwrap());
        assert!((a - b).abs() < 1e-12 * a);
        assert!(kernel_intensity_estimate(&EventPattern::empty(&big, 10), 300.0, 5.0).is_err());
    }

    #[test]
    fn single_simulation_envelope_is_that_curve() {
        let lam = |_: usize, _: usize| 2e-6;
        let obs = simulate_poisson(&lam, &grid(), 30, 1, 5).unwrap();
        let cfg = EnvelopeConfig {
            n_sim: 1,
            statistic: Statistic::Kfun { r: vec![100.0, 300.0], v: vec![2.0, 5.0] },
            spatial_sigma: 200.0,
            temporal_bandwidth: 5.0,
        };
        let e = envelope_test(&lam, &grid(), 30, &obs, &cfg, 1).unwrap();
        assert_eq!(e.lower, e.upper);
        assert!(envelope_test(&lam, &grid(), 30, &obs, &EnvelopeConfig { n_sim: 0, ..cfg }, 1).is_err());
    }

    #[test]
    fn monthly_residual_arithmetic() {
        let t_len = 365;
        let mut daily = Vec::new();
        for (m, &days) in MONTH_DAYS.iter().enumerate() {
            daily.extend(std::iter::repeat_n(if m == 0 { 10.0 / 31.0 } else { 0.0 }, days));
        }
        let ev: Vec<(f64, f64, f64)> = (0..8).map(|i| (50.0, 50.0, i as f64)).collect();
        let rows = residuals_temporal(&daily, &pattern(&ev, t_len), None).unwrap();
        assert_eq!(rows.len(), 12);
        assert!((rows[0].residual - 2.0).abs() < 1e-12);
        assert!(rows.iter().all(|m| m.complete));
        assert_eq!(rows[1].month, 2);
        let part = residuals_temporal(&daily[..40], &pattern(&[], 40), None).unwrap();
        assert!(!part[1].complete);
    }
}

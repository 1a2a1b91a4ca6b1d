//! Logistic-regression estimation of the temporal coefficients against a
//! dummy point process, model selection and delta-method uncertainty.
//!
//! For a point `x = (u, t)` of the superposition of events and dummies,
//! `P(event | x) = σ(θ · C(t) + log h(u) − log ρ(u, t))`. With the tuned
//! dummy `ρ = r · h · s(t)` the house density cancels from the logit.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geom::{RasterField, SpatialGrid};
use crate::ingest::{EventPattern, TemporalCovariates};
use crate::model::{basis_row, basis_row_into, dot, IntensityModel, ModelSpec, TemporalBasisSpec, ThetaVector, TypeSpec};
use crate::{par, rng, sim};

/// Seasonal dummy profile `s(t) = 0.5 + 0.25·(sin(2πt/365 + π/2) + 1)`, in [0.5, 1].
pub fn seasonal_profile(t: f64) -> f64 {
    0.5 + 0.25 * ((2.0 * PI * t / 365.0 + PI / 2.0).sin() + 1.0)
}

/// Default dummy multipliers per house type.
pub fn default_multiplier(k: u8) -> f64 {
    match k {
        1 => 60.0,
        4 => 8.0,
        _ => 20.0,
    }
}

/// Dummy point-process intensity for one house type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DummyIntensity {
    /// `ρ(u, t) = r · h(u) · s(t)`.
    Tuned { r: f64 },
    /// Constant rate per m² per day over the window.
    Uniform { rate: f64 },
}

impl DummyIntensity {
    pub fn tuned(k: u8) -> Self {
        Self::Tuned { r: default_multiplier(k) }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            Self::Tuned { r } => r,
            Self::Uniform { rate } => rate,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("dummy intensity parameter {v} must be positive")))
        }
    }

    /// `ρ` at a location with house density `h` and time `t`.
    pub fn rho(&self, h: f64, t: f64) -> f64 {
        match *self {
            Self::Tuned { r } => r * h * seasonal_profile(t),
            Self::Uniform { rate } => rate,
        }
    }

    /// `log h − log ρ`, with the house density cancelled exactly when tuned.
    fn offset(&self, h: f64, t: f64) -> f64 {
        match *self {
            Self::Tuned { r } => -(r * seasonal_profile(t)).ln(),
            Self::Uniform { rate } => h.ln() - rate.ln(),
        }
    }

    /// Same expected dummy count spread uniformly over the window.
    pub fn uniform_equivalent(&self, density: &RasterField, t_len: usize) -> Self {
        let grid = density.grid();
        let total = sim::expected_count(&|c: usize, d: usize| self.rho(density.get(c), d as f64), grid, t_len);
        Self::Uniform {
            rate: total / (grid.window_area() * t_len as f64),
        }
    }
}

/// `ρ_k(u, t)` per m² per day.
pub fn dummy_intensity(h: f64, t: f64, dummy: &DummyIntensity) -> f64 {
    dummy.rho(h, t)
}

/// Dummy realisation on the cell × day grid, labelled `k`.
pub fn simulate_dummy(dummy: &DummyIntensity, density: &RasterField, t_len: usize, k: u8, seed: u64) -> Result<EventPattern> {
    dummy.validate()?;
    let rho = |c: usize, d: usize| dummy.rho(density.get(c), d as f64);
    sim::simulate_poisson(&rho, density.grid(), t_len, k, seed)
}

/// Stream seed for the dummy realisation of type `k`.
pub fn dummy_seed(seed: u64, k: u8, dummy: &DummyIntensity) -> u64 {
    let purpose = match dummy {
        DummyIntensity::Tuned { .. } => rng::tag::DUMMY,
        DummyIntensity::Uniform { .. } => rng::tag::UNIFORM_DUMMY,
    };
    rng::derive_seed(seed, &[purpose, k as u64])
}

/// Events and dummies of one type reduced to times, logit offsets and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub times: Vec<f64>,
    pub offsets: Vec<f64>,
    pub is_data: Vec<bool>,
}

impl PointSet {
    /// Dummies in cells with `h = 0` carry probability zero of being events
    /// and contribute nothing to the likelihood, so they are dropped. An
    /// event in such a cell is an error.
    pub fn new(events: &EventPattern, dummies: &EventPattern, density: &RasterField, dummy: &DummyIntensity) -> Result<Self> {
        dummy.validate()?;
        let grid = density.grid();
        let mut set = Self {
            times: Vec::with_capacity(events.len() + dummies.len()),
            offsets: Vec::with_capacity(events.len() + dummies.len()),
            is_data: Vec::with_capacity(events.len() + dummies.len()),
        };
        for (pattern, is_data) in [(events, true), (dummies, false)] {
            for e in pattern.events() {
                let h = grid
                    .cell_of(e.x, e.y)
                    .filter(|&c| grid.is_in(c))
                    .map(|c| density.get(c))
                    .ok_or_else(|| Error::OutOfRange(format!("point ({}, {}) outside the window", e.x, e.y)))?;
                if h <= 0.0 {
                    if is_data {
                        return Err(Error::InvalidParameter(format!(
                            "event at ({}, {}) lies where the house density is zero",
                            e.x, e.y
                        )));
                    }
                    continue;
                }
                set.times.push(e.t);
                set.offsets.push(dummy.offset(h, e.t));
                set.is_data.push(is_data);
            }
        }
        Ok(set)
    }

    pub fn sample(&self, basis: &TemporalBasisSpec, cov: &TemporalCovariates) -> Result<LogisticSample> {
        let m = basis.dimension();
        let mut rows = Vec::with_capacity(self.times.len() * m);
        let mut row = Vec::with_capacity(m);
        for &t in &self.times {
            basis_row_into(t, cov, basis, &mut row)?;
            rows.extend_from_slice(&row);
        }
        Ok(LogisticSample {
            m,
            rows,
            offsets: self.offsets.clone(),
            is_data: self.is_data.clone(),
        })
    }
}

/// Design rows (row-major, width `m`), offsets and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSample {
    m: usize,
    rows: Vec<f64>,
    offsets: Vec<f64>,
    is_data: Vec<bool>,
}

impl LogisticSample {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            rows: Vec::new(),
            offsets: Vec::new(),
            is_data: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], offset: f64, is_data: bool) -> Result<()> {
        if row.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: row.len(),
            });
        }
        self.rows.extend_from_slice(row);
        self.offsets.push(offset);
        self.is_data.push(is_data);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn n_data(&self) -> usize {
        self.is_data.iter().filter(|&&d| d).count()
    }

    pub fn n_dummy(&self) -> usize {
        self.len() - self.n_data()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    fn eta(&self, i: usize, theta: &[f64]) -> f64 {
        dot(self.row(i), theta) + self.offsets[i]
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ_data log σ(η) + Σ_dummy log(1 − σ(η))`.
pub fn log_likelihood(sample: &LogisticSample, theta: &[f64]) -> f64 {
    (0..sample.len())
        .map(|i| {
            let eta = sample.eta(i, theta);
            if sample.is_data[i] {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Estimating function `Σ (y − σ(η)) · C`, the gradient of the log-likelihood.
pub fn estimating_equation(sample: &LogisticSample, theta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; sample.m];
    for i in 0..sample.len() {
        let p = sigmoid(sample.eta(i, theta));
        let resid = if sample.is_data[i] { 1.0 - p } else { -p };
        for (gj, x) in g.iter_mut().zip(sample.row(i)) {
            *gj += resid * x;
        }
    }
    g
}

fn information(sample: &LogisticSample, theta: &[f64]) -> DMatrix<f64> {
    let m = sample.m;
    let mut h = DMatrix::zeros(m, m);
    for i in 0..sample.len() {
        let p = sigmoid(sample.eta(i, theta));
        let w = p * (1.0 - p);
        let row = sample.row(i);
        for a in 0..m {
            let wa = w * row[a];
            for b in 0..=a {
                h[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Convergence threshold on the column-scaled gradient ∞-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Raw estimating-equation values at `theta`.
    pub gradient: Vec<f64>,
}

const SEPARATION_BOUND: f64 = 1e4;
/// A log-likelihood this close to its supremum 0 means perfect separation.
const SEPARATION_LOGLIK: f64 = 1e-6;

/// Maximizes the logistic log-likelihood by Newton's method with step
/// halving. Columns are scaled by their root mean square for the solve and
/// the convergence test.
pub fn logistic_fit(sample: &LogisticSample, opts: &NewtonOptions) -> Result<LogisticFit> {
    let (n1, n0) = (sample.n_data(), sample.n_dummy());
    if n1 == 0 {
        return Err(Error::Separation("no data points; the intercept diverges to −∞".into()));
    }
    if n0 == 0 {
        return Err(Error::Separation("no dummy points; the intercept diverges to +∞".into()));
    }
    let m = sample.m;
    let n = sample.len() as f64;
    let scale: Vec<f64> = (0..m)
        .map(|j| {
            let ms = (0..sample.len()).map(|i| sample.row(i)[j].powi(2)).sum::<f64>() / n;
            if ms > 0.0 {
                ms.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled_norm = |g: &[f64]| g.iter().zip(&scale).map(|(g, s)| (g / s).abs()).fold(0.0, f64::max);

    let mut theta = vec![0.0; m];
    let intercept = (0..sample.len()).all(|i| sample.row(i)[0] == 1.0);
    if intercept {
        let mean_offset = sample.offsets.iter().sum::<f64>() / n;
        theta[0] = (n1 as f64 / n0 as f64).ln() - mean_offset;
    }
    let mut ll = log_likelihood(sample, &theta);
    let mut grad = estimating_equation(sample, &theta);
    for iter in 0..=opts.max_iterations {
        let gnorm = scaled_norm(&grad);
        if gnorm < opts.tolerance {
            if ll > -SEPARATION_LOGLIK {
                return Err(Error::Separation(format!(
                    "log-likelihood {ll:e} at iteration {iter}: data and dummies are perfectly separated"
                )));
            }
            return Ok(LogisticFit {
                theta,
                log_likelihood: ll,
                iterations: iter,
                gradient: grad,
            });
        }
        if iter == opts.max_iterations {
            return Err(Error::NotConverged {
                iterations: iter,
                gradient_norm: gnorm,
            });
        }
        let info = information(sample, &theta);
        let scaled = DMatrix::from_fn(m, m, |a, b| info[(a, b)] / (scale[a] * scale[b]));
        let rhs = DVector::from_iterator(m, grad.iter().zip(&scale).map(|(g, s)| g / s));
        let step = match scaled.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                return Err(Error::Separation(format!(
                    "information matrix not positive definite at iteration {iter}"
                )))
            }
        };
        let direction: Vec<f64> = step.iter().zip(&scale).map(|(d, s)| d / s).collect();
        let mut t = 1.0;
        let mut accepted = None;
        // Inside the quadratic region the gain can be below the rounding
        // error of the likelihood sum; take the full step there.
        let predicted_gain: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        if predicted_gain < 1e-12 * (1.0 + ll.abs()) {
            let cand: Vec<f64> = theta.iter().zip(&direction).map(|(a, d)| a + d).collect();
            let cll = log_likelihood(sample, &cand);
            accepted = Some((cand, cll));
        }
        for _ in 0..=opts.max_halvings {
            if accepted.is_some() {
                break;
            }
            let cand: Vec<f64> = theta.iter().zip(&direction).map(|(a, d)| a + t * d).collect();
            let cll = log_likelihood(sample, &cand);
            if cll >= ll {
                accepted = Some((cand, cll));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, cll)) => {
                theta = cand;
                ll = cll;
            }
            None => {
                // No ascent possible: θ is at the optimum up to rounding.
                if gnorm < opts.tolerance.max(1e-6) {
                    return Ok(LogisticFit {
                        theta,
                        log_likelihood: ll,
                        iterations: iter,
                        gradient: grad,
                    });
                }
                return Err(Error::NotConverged {
                    iterations: iter,
                    gradient_norm: gnorm,
                });
            }
        }
        if theta.iter().any(|v| !v.is_finite() || v.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation(format!(
                "coefficients diverge (|θ| > {SEPARATION_BOUND:e}) at iteration {}",
                iter + 1
            )));
        }
        grad = estimating_equation(sample, &theta);
    }
    unreachable!("loop returns on its last iteration")
}

/// Godambe information `Ĝ = Σ_cells Σ_days λρ/(λ+ρ) · C Cᵀ · area · Δt`.
/// Each day is split into `substeps` equal sub-intervals evaluated at their
/// left end; one substep reproduces the day grid used for simulation.
pub fn godambe(
    theta: &[f64],
    ts: &TypeSpec,
    dummy: &DummyIntensity,
    cov: &TemporalCovariates,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    let m = ts.basis.dimension();
    if theta.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: theta.len() });
    }
    if substeps == 0 {
        return Err(Error::InvalidParameter("time_substeps must be at least 1".into()));
    }
    dummy.validate()?;
    let grid = ts.density.grid();
    let area = grid.cell_area();
    let cells: Vec<(usize, f64)> = grid
        .masked_cells()
        .map(|c| (c, ts.density.get(c)))
        .filter(|&(_, h)| h > 0.0)
        .collect();
    let n_steps = cov.t_len() * substeps;
    let dt = 1.0 / substeps as f64;
    let steps = par::map_range(n_steps, |s| -> Result<(f64, Vec<f64>)> {
        let t = (s / substeps) as f64 + (s % substeps) as f64 * dt;
        let row = basis_row(t, cov, &ts.basis)?;
        let temporal = dot(theta, &row).exp();
        let w: f64 = cells
            .iter()
            .map(|&(_, h)| {
                let lam = h * temporal;
                let rho = dummy.rho(h, t);
                if lam + rho > 0.0 {
                    lam * rho / (lam + rho)
                } else {
                    0.0
                }
            })
            .sum();
        Ok((w * area * dt, row))
    });
    let mut g = DMatrix::zeros(m, m);
    for step in steps {
        let (w, row) = step?;
        for a in 0..m {
            for b in 0..m {
                g[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    Ok(g)
}

/// Inverse of a Godambe matrix. A rank-deficient matrix is reported with
/// the names of the columns spanning its null direction.
pub fn invert_godambe(g: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let m = g.nrows();
    let zero: Vec<&str> = (0..m).filter(|&j| g[(j, j)] <= 0.0).map(|j| names[j].as_str()).collect();
    if !zero.is_empty() {
        return Err(Error::Singular(format!("zero information for columns: {}", zero.join(", "))));
    }
    let d: Vec<f64> = (0..m).map(|j| 1.0 / g[(j, j)].sqrt()).collect();
    let corr = DMatrix::from_fn(m, m, |a, b| g[(a, b)] * d[a] * d[b]);
    let eig = SymmetricEigen::new(corr.clone());
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if lmin < 1e-12 {
        let v = eig.eigenvectors.column(imin);
        let cols: Vec<&str> = (0..m).filter(|&j| v[j].abs() > 0.1).map(|j| names[j].as_str()).collect();
        return Err(Error::Singular(format!("collinear columns: {}", cols.join(", "))));
    }
    let inv = corr
        .cholesky()
        .ok_or_else(|| Error::Singular("Godambe matrix not positive definite".into()))?
        .inverse();
    Ok(DMatrix::from_fn(m, m, |a, b| inv[(a, b)] * d[a] * d[b]))
}

/// Two-sided standard normal quantile for a confidence level in [0, 1).
pub fn z_value(level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!("confidence level {level} not in [0, 1)")));
    }
    if level == 0.0 {
        return Ok(0.0);
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

/// `θ̂_p ± z · √(Ĝ⁻¹)_pp`.
pub fn confidence_intervals(theta: &[f64], g_inv: &DMatrix<f64>, level: f64) -> Result<Vec<(f64, f64)>> {
    let z = z_value(level)?;
    Ok(theta
        .iter()
        .enumerate()
        .map(|(p, &th)| {
            let half = z * g_inv[(p, p)].max(0.0).sqrt();
            (th - half, th + half)
        })
        .collect())
}

/// Estimate with CI half-width, e.g. `-1.22e1 (±3.82e-1)`.
pub fn format_estimate(estimate: f64, half_width: f64) -> String {
    format!("{estimate:.2e} (±{half_width:.2e})")
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|a| (0..m.ncols()).map(|b| m[(a, b)]).collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |a, b| rows[a][b])
}

/// Fitted coefficients and uncertainty for one house type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeFit {
    pub k: u8,
    pub basis: TemporalBasisSpec,
    pub terms: Vec<String>,
    pub theta: Vec<f64>,
    pub godambe: Vec<Vec<f64>>,
    pub godambe_inverse: Vec<Vec<f64>>,
    pub ci: Vec<(f64, f64)>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_data: usize,
    pub n_dummy: usize,
    pub iterations: usize,
    pub dummy: DummyIntensity,
}

impl TypeFit {
    pub fn g_inv(&self) -> DMatrix<f64> {
        from_rows(&self.godambe_inverse)
    }

    /// Rows of `term,estimate (±half-width)`.
    pub fn table(&self) -> Vec<(String, String)> {
        self.terms
            .iter()
            .zip(&self.theta)
            .zip(&self.ci)
            .map(|((n, &th), &(lo, hi))| (n.clone(), format_estimate(th, (hi - lo) / 2.0)))
            .collect()
    }
}

/// `−2ℓ + 2m`.
pub fn aic(log_likelihood: f64, m: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub newton: NewtonOptions,
    pub level: f64,
    pub time_substeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            level: 0.95,
            time_substeps: 1,
        }
    }
}

/// Logistic fit, Godambe matrix and confidence intervals for one type and
/// basis. `points` must come from that type's events and dummies.
pub fn fit_type(
    points: &PointSet,
    ts: &TypeSpec,
    dummy: &DummyIntensity,
    cov: &TemporalCovariates,
    opts: &FitOptions,
) -> Result<TypeFit> {
    let sample = points.sample(&ts.basis, cov)?;
    let lf = logistic_fit(&sample, &opts.newton)?;
    let g = godambe(&lf.theta, ts, dummy, cov, opts.time_substeps)?;
    let terms = ts.basis.term_names();
    let g_inv = invert_godambe(&g, &terms)?;
    let ci = confidence_intervals(&lf.theta, &g_inv, opts.level)?;
    Ok(TypeFit {
        k: ts.k,
        basis: ts.basis,
        terms,
        aic: aic(lf.log_likelihood, ts.basis.dimension()),
        theta: lf.theta,
        godambe: to_rows(&g),
        godambe_inverse: to_rows(&g_inv),
        ci,
        log_likelihood: lf.log_likelihood,
        n_data: sample.n_data(),
        n_dummy: sample.n_dummy(),
        iterations: lf.iterations,
        dummy: *dummy,
    })
}

/// Inclusive order ranges for the AIC grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRanges {
    pub o1: (u8, u8),
    pub o2: (u8, u8),
    pub o3: (u8, u8),
    pub o4: (u8, u8),
    pub include_speed: bool,
    pub include_interaction: bool,
}

impl Default for OrderRanges {
    fn default() -> Self {
        Self {
            o1: (1, 4),
            o2: (1, 1),
            o3: (1, 5),
            o4: (1, 1),
            include_speed: false,
            include_interaction: false,
        }
    }
}

impl OrderRanges {
    pub fn single(basis: TemporalBasisSpec) -> Self {
        Self {
            o1: (basis.o1, basis.o1),
            o2: (basis.o2, basis.o2),
            o3: (basis.o3, basis.o3),
            o4: (basis.o4, basis.o4),
            include_speed: basis.include_speed,
            include_interaction: basis.include_interaction,
        }
    }

    /// Candidate bases in lexicographic order of (o1, o2, o3, o4).
    pub fn candidates(&self) -> Result<Vec<TemporalBasisSpec>> {
        let span = |(lo, hi): (u8, u8), used: bool| -> Vec<u8> {
            if used {
                (lo..=hi).collect()
            } else {
                vec![lo]
            }
        };
        let mut out = Vec::new();
        for o1 in self.o1.0..=self.o1.1 {
            for &o2 in &span(self.o2, self.include_speed) {
                for o3 in self.o3.0..=self.o3.1 {
                    for &o4 in &span(self.o4, self.include_interaction) {
                        out.push(TemporalBasisSpec::new(o1, o2, o3, o4, self.include_speed, self.include_interaction)?);
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidParameter("empty order range".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub basis: TemporalBasisSpec,
    pub aic: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: TypeFit,
    pub candidates: Vec<Candidate>,
    pub warnings: Vec<String>,
}

fn order_key(b: &TemporalBasisSpec) -> (usize, u8, u8, u8, u8) {
    (b.dimension(), b.o1, b.speed_order() as u8, b.o3, b.interaction_order() as u8)
}

/// Exhaustive AIC search over `ranges` with one shared dummy realisation.
/// Ties go to fewer coefficients, then to lexicographically smaller orders.
pub fn grid_search_aic(
    points: &PointSet,
    ts: &TypeSpec,
    dummy: &DummyIntensity,
    ranges: &OrderRanges,
    cov: &TemporalCovariates,
    opts: &FitOptions,
) -> Result<Selection> {
    let bases = ranges.candidates()?;
    let fits = par::map_slice(&bases, |b| -> Result<LogisticFit> {
        logistic_fit(&points.sample(b, cov)?, &opts.newton)
    });
    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    let mut best: Option<(f64, TemporalBasisSpec)> = None;
    for (b, f) in bases.iter().zip(fits) {
        match f {
            Ok(lf) => {
                let a = aic(lf.log_likelihood, b.dimension());
                candidates.push(Candidate {
                    basis: *b,
                    aic: Some(a),
                    log_likelihood: Some(lf.log_likelihood),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((ba, bb)) => a < *ba || (a == *ba && order_key(b) < order_key(bb)),
                };
                if better {
                    best = Some((a, *b));
                }
            }
            Err(e) => {
                warnings.push(format!("type {}: candidate {:?} excluded: {e}", ts.k, b));
                candidates.push(Candidate {
                    basis: *b,
                    aic: None,
                    log_likelihood: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (_, basis) = best.ok_or(Error::NotConverged {
        iterations: opts.newton.max_iterations,
        gradient_norm: f64::NAN,
    })?;
    let chosen = TypeSpec {
        basis,
        ..ts.clone()
    };
    Ok(Selection {
        best: fit_type(points, &chosen, dummy, cov, opts)?,
        candidates,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// `2(ℓ_full − ℓ_reduced)` against χ² with `m_full − m_reduced` degrees of freedom.
pub fn likelihood_ratio_test(
    full: (&TemporalBasisSpec, f64),
    reduced: (&TemporalBasisSpec, f64),
) -> Result<LrtOutcome> {
    if !reduced.0.is_nested_in(full.0) {
        return Err(Error::InvalidParameter(format!(
            "basis {:?} is not nested in {:?}",
            reduced.0, full.0
        )));
    }
    let dof = full.0.dimension() - reduced.0.dimension();
    let statistic = (2.0 * (full.1 - reduced.1)).max(0.0);
    Ok(LrtOutcome {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).expect("positive dof").sf(statistic)
}

/// LRT of one term group added to or removed from a selected basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTest {
    pub k: u8,
    pub term: String,
    pub full: TemporalBasisSpec,
    pub reduced: TemporalBasisSpec,
    pub outcome: Option<LrtOutcome>,
    pub error: Option<String>,
}

/// Toggles the speed and interaction term groups of `best` and tests each
/// change with the same events and dummies.
pub fn term_tests(
    points: &PointSet,
    k: u8,
    best: &TemporalBasisSpec,
    best_loglik: f64,
    cov: &TemporalCovariates,
    opts: &NewtonOptions,
) -> Vec<TermTest> {
    let mut out = Vec::new();
    for term in ["speed", "interaction"] {
        let mut other = *best;
        let present = match term {
            "speed" => {
                other.include_speed = !best.include_speed;
                other.o2 = best.o2.max(1);
                best.include_speed
            }
            _ => {
                other.include_interaction = !best.include_interaction;
                other.o4 = best.o4.max(1);
                best.include_interaction
            }
        };
        let (full, reduced) = if present { (*best, other) } else { (other, *best) };
        let result = points
            .sample(&other, cov)
            .and_then(|s| logistic_fit(&s, opts))
            .and_then(|lf| {
                let (lf_full, lf_red) = if present {
                    (best_loglik, lf.log_likelihood)
                } else {
                    (lf.log_likelihood, best_loglik)
                };
                likelihood_ratio_test((&full, lf_full), (&reduced, lf_red))
            });
        let (outcome, error) = match result {
            Ok(o) => (Some(o), None),
            Err(e) => (None, Some(e.to_string())),
        };
        out.push(TermTest {
            k,
            term: term.to_string(),
            full,
            reduced,
            outcome,
            error,
        });
    }
    out
}

/// Fraction of cell-days with positive house density where `ρ ≥ 4·λ̂`.
pub fn rho_check(fit: &TypeFit, density: &RasterField, cov: &TemporalCovariates) -> Result<f64> {
    let grid = density.grid();
    let hs: Vec<f64> = grid.masked_cells().map(|c| density.get(c)).filter(|&h| h > 0.0).collect();
    if hs.is_empty() {
        return Ok(1.0);
    }
    let mut ok = 0usize;
    for d in 0..cov.t_len() {
        let t = d as f64;
        let temporal = dot(&fit.theta, &basis_row(t, cov, &fit.basis)?).exp();
        ok += hs.iter().filter(|&&h| fit.dummy.rho(h, t) >= 4.0 * h * temporal).count();
    }
    Ok(ok as f64 / (hs.len() * cov.t_len()) as f64)
}

/// Fit of every house type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub level: f64,
    pub types: Vec<TypeFit>,
}

impl FitResult {
    pub fn get(&self, k: u8) -> Result<&TypeFit> {
        self.types
            .iter()
            .find(|f| f.k == k)
            .ok_or_else(|| Error::InvalidParameter(format!("no fit for house type {k}")))
    }

    pub fn thetas(&self) -> Vec<ThetaVector> {
        self.types
            .iter()
            .map(|f| ThetaVector {
                k: f.k,
                coefficients: f.theta.clone(),
            })
            .collect()
    }

    /// Model structure with the selected bases.
    pub fn model_spec(&self, spec: &ModelSpec) -> Result<ModelSpec> {
        let mut out = spec.clone();
        for f in &self.types {
            out = out.with_basis(f.k, f.basis)?;
        }
        Ok(out)
    }

    /// Plug-in intensity model.
    pub fn intensity_model(&self, spec: &ModelSpec, cov: &TemporalCovariates) -> Result<IntensityModel> {
        IntensityModel::new(self.model_spec(spec)?, self.thetas(), cov)
    }
}

/// Everything produced by a full fitting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub result: FitResult,
    pub candidates: Vec<(u8, Vec<Candidate>)>,
    pub term_tests: Vec<TermTest>,
    /// Per type, fraction of cell-days with `ρ ≥ 4·λ̂`.
    pub rho_check: Vec<(u8, f64)>,
    /// Types whose fit failed numerically, with the reason.
    pub failures: Vec<(u8, String)>,
    pub warnings: Vec<String>,
}

/// Dummy generation, grid search, term tests and Godambe uncertainty for
/// every type in `spec`. `dummies` maps each type to its dummy intensity.
/// A numerical failure for one type is recorded and the others proceed.
pub fn fit_model(
    events: &EventPattern,
    spec: &ModelSpec,
    dummies: &[(u8, DummyIntensity)],
    ranges: &OrderRanges,
    cov: &TemporalCovariates,
    opts: &FitOptions,
    seed: u64,
) -> Result<FitReport> {
    if cov.t_len() < events.t_len() {
        return Err(Error::DimensionMismatch {
            expected: events.t_len(),
            got: cov.t_len(),
        });
    }
    let per_type = par::map_slice(spec.types(), |ts| -> Result<_> {
        let dummy = dummies
            .iter()
            .find(|(k, _)| *k == ts.k)
            .map(|(_, d)| *d)
            .unwrap_or_else(|| DummyIntensity::tuned(ts.k));
        let dpat = simulate_dummy(&dummy, &ts.density, events.t_len(), ts.k, dummy_seed(seed, ts.k, &dummy))?;
        let points = PointSet::new(&events.of_type(ts.k), &dpat, &ts.density, &dummy)?;
        let sel = grid_search_aic(&points, ts, &dummy, ranges, cov, opts)?;
        let tests = term_tests(&points, ts.k, &sel.best.basis, sel.best.log_likelihood, cov, &opts.newton);
        let frac = rho_check(&sel.best, &ts.density, cov)?;
        Ok((sel, tests, frac))
    });
    let mut report = FitReport {
        result: FitResult {
            level: opts.level,
            types: Vec::new(),
        },
        candidates: Vec::new(),
        term_tests: Vec::new(),
        rho_check: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    for (ts, r) in spec.types().iter().zip(per_type) {
        let (sel, tests, frac) = match r {
            Ok(v) => v,
            Err(e) if e.is_numerical() => {
                report.failures.push((ts.k, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        if frac < 1.0 {
            report
                .warnings
                .push(format!("type {}: ρ ≥ 4λ̂ holds on {:.2}% of cell-days", ts.k, 100.0 * frac));
        }
        report.warnings.extend(sel.warnings);
        report.candidates.push((ts.k, sel.candidates));
        report.result.types.push(sel.best);
        report.term_tests.extend(tests);
        report.rho_check.push((ts.k, frac));
    }
    Ok(report)
}

/// Point prediction with a delta-method interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyPrediction {
    pub t: f64,
    pub lambda: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Per-day `λ̂_k(t) = exp(θ̂·C(t))` with interval `λ̂·exp(±z·√(CᵀĜ⁻¹C))`.
pub fn predict_type(fit: &TypeFit, cov: &TemporalCovariates, days: Range<usize>, level: f64) -> Result<Vec<DailyPrediction>> {
    let z = z_value(level)?;
    let g_inv = fit.g_inv();
    days.map(|d| {
        let t = d as f64;
        let c = DVector::from_vec(basis_row(t, cov, &fit.basis)?);
        let lambda = dot(&fit.theta, c.as_slice()).exp();
        let half = z * (c.dot(&(&g_inv * &c))).max(0.0).sqrt();
        Ok(DailyPrediction {
            t,
            lambda,
            lo: lambda * (-half).exp(),
            hi: lambda * half.exp(),
        })
    })
    .collect()
}

/// Daily regional total `Σ_k H_k · λ̂_k(t)` where `H_k = ∫ h_k`, with the
/// log-scale interval from the summed per-type delta-method variances.
pub fn predict_regional(
    fit: &FitResult,
    spec: &ModelSpec,
    cov: &TemporalCovariates,
    days: Range<usize>,
    level: f64,
) -> Result<Vec<DailyPrediction>> {
    let z = z_value(level)?;
    let per_type = fit
        .types
        .iter()
        .map(|f| Ok((spec.get(f.k)?.density.integral(), predict_type(f, cov, days.clone(), 0.0)?, f.g_inv(), f)))
        .collect::<Result<Vec<_>>>()?;
    days.enumerate()
        .map(|(i, d)| {
            let t = d as f64;
            let mut total = 0.0;
            let mut var = 0.0;
            for (mass, preds, g_inv, f) in &per_type {
                let c = DVector::from_vec(basis_row(t, cov, &f.basis)?);
                let e = mass * preds[i].lambda;
                total += e;
                var += e * e * c.dot(&(g_inv * &c));
            }
            let half = if total > 0.0 { z * var.max(0.0).sqrt() / total } else { 0.0 };
            Ok(DailyPrediction {
                t,
                lambda: total,
                lo: total * (-half).exp(),
                hi: total * half.exp(),
            })
        })
        .collect()
}

/// `Σ_k h_k(u) · λ̂_k(t)` on one day.
pub fn prediction_raster(fit: &FitResult, spec: &ModelSpec, cov: &TemporalCovariates, day: usize) -> Result<RasterField> {
    let grid = spec.grid();
    let mut values = vec![0.0; grid.n_cells()];
    for f in &fit.types {
        let lam = dot(&f.theta, &basis_row(day as f64, cov, &f.basis)?).exp();
        let h = &spec.get(f.k)?.density;
        for (v, &hv) in values.iter_mut().zip(h.values()) {
            *v += hv * lam;
        }
    }
    RasterField::from_values(grid, values)
}

/// Fits under the tuned dummy and under a uniform dummy of equal expected
/// size, with their differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DummyComparison {
    pub tuned: FitResult,
    pub uniform: FitResult,
    /// Per day: (t, tuned total, uniform total, tuned − uniform).
    pub series: Vec<(f64, f64, f64, f64)>,
    /// Per requested day: tuned − uniform intensity raster.
    pub rasters: Vec<(usize, RasterField)>,
}

/// Refits each type's basis from `fit` under both dummy schemes.
pub fn compare_dummy_schemes(
    events: &EventPattern,
    spec: &ModelSpec,
    fit: &FitResult,
    cov: &TemporalCovariates,
    opts: &FitOptions,
    raster_days: &[usize],
    seed: u64,
) -> Result<DummyComparison> {
    let spec = fit.model_spec(spec)?;
    let fits = par::map_slice(spec.types(), |ts| -> Result<(TypeFit, TypeFit)> {
        let tuned = fit.get(ts.k).map(|f| f.dummy).unwrap_or_else(|_| DummyIntensity::tuned(ts.k));
        let tuned = match tuned {
            DummyIntensity::Tuned { .. } => tuned,
            DummyIntensity::Uniform { .. } => DummyIntensity::tuned(ts.k),
        };
        let uniform = tuned.uniform_equivalent(&ts.density, events.t_len());
        let own = events.of_type(ts.k);
        let run = |d: DummyIntensity| -> Result<TypeFit> {
            let dpat = simulate_dummy(&d, &ts.density, events.t_len(), ts.k, dummy_seed(seed, ts.k, &d))?;
            fit_type(&PointSet::new(&own, &dpat, &ts.density, &d)?, ts, &d, cov, opts)
        };
        Ok((run(tuned)?, run(uniform)?))
    });
    let mut tuned = FitResult { level: opts.level, types: Vec::new() };
    let mut uniform = tuned.clone();
    for r in fits {
        let (a, b) = r?;
        tuned.types.push(a);
        uniform.types.push(b);
    }
    let days = 0..events.t_len();
    let a = predict_regional(&tuned, &spec, cov, days.clone(), 0.0)?;
    let b = predict_regional(&uniform, &spec, cov, days, 0.0)?;
    let series = a.iter().zip(&b).map(|(a, b)| (a.t, a.lambda, b.lambda, a.lambda - b.lambda)).collect();
    let rasters = raster_days
        .iter()
        .map(|&d| {
            let ra = prediction_raster(&tuned, &spec, cov, d)?;
            let rb = prediction_raster(&uniform, &spec, cov, d)?;
            Ok((d, ra.zip_with(&rb, |x, y| x - y)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DummyComparison {
        tuned,
        uniform,
        series,
        rasters,
    })
}

/// Grid of `n` cells of 1 m² in a row, convenient for closed-form checks.
#[doc(hidden)]
pub fn unit_strip(n: usize) -> SpatialGrid {
    SpatialGrid::new(n, 1, 0.0, 0.0, 1.0).expect("valid grid")
}

//! `stppfit` command-line front end.
//!
//! Every command reads a JSON run configuration; `--seed` and `--out`
//! override the file. Relative paths in the configuration are resolved
//! against the configuration file's directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::diag::{self, Domain, EnvelopeConfig, Statistic};
use crate::error::{Error, Result};
use crate::fit::{self, DummyIntensity, FitOptions, FitResult, NewtonOptions, OrderRanges};
use crate::forest::{self, ForestConfig, ImportanceScores};
use crate::geom::{read_raster, write_raster, RasterField};
use crate::ingest::{drop_leap_days, read_raw_events, read_weather, EventPattern, TemporalCovariates};
use crate::io::{fmt_f64, write_atomic};
use crate::model::{ModelSpec, TemporalBasisSpec, TypeSpec};
use crate::sim::{make_synthetic_world, WorldConfig};

#[derive(Debug, Parser)]
#[command(name = "stppfit", version, about = "Spatio-temporal Poisson risk models for point events")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random-forest importance of spatial and temporal covariates.
    Importance(CommonArgs),
    /// Fit the temporal coefficients of every house type.
    Fit(CommonArgs),
    /// Daily predictions with confidence bands.
    Predict(PredictArgs),
    /// Second-order diagnostics, envelopes and residuals.
    Diagnose(DiagnoseArgs),
    /// Write a synthetic world.
    Simulate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// First day: ISO date or day index.
    #[arg(long)]
    pub from: Option<String>,
    /// Last day (inclusive): ISO date or day index.
    #[arg(long)]
    pub to: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    Pcf,
    Kfun,
    Envelope,
    Residuals,
    RhoTuning,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Diagnostics to run; defaults to the configuration's list.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub which: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRef {
    pub k: u8,
    pub raster: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRaster {
    pub name: String,
    pub raster: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub n_trees: usize,
    pub mtry_spatial: Option<usize>,
    pub mtry_temporal: Option<usize>,
    pub min_node_size: usize,
    /// Box side in grid cells for the spatial table.
    pub box_cells: usize,
    pub exclude_boundary: bool,
    /// Spatial covariates besides the house densities.
    pub covariates: Vec<NamedRaster>,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry_spatial: None,
            mtry_temporal: None,
            min_node_size: 5,
            box_cells: 2,
            exclude_boundary: true,
            covariates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub ranges: OrderRanges,
    /// Dummy multipliers `r_k` by house type.
    pub multipliers: BTreeMap<u8, f64>,
    pub level: f64,
    pub time_substeps: usize,
    pub newton: NewtonOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ranges: OrderRanges::default(),
            multipliers: BTreeMap::new(),
            level: 0.95,
            time_substeps: 1,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub from: Option<String>,
    pub to: Option<String>,
    pub raster_days: Vec<String>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensitySource {
    Fit,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub which: Vec<Diagnostic>,
    /// Plug-in intensity for pcf/kfun: the fitted model or a kernel estimate.
    pub intensity: IntensitySource,
    pub spatial_lags: Vec<f64>,
    pub spatial_bandwidth: f64,
    pub temporal_lags: Vec<f64>,
    pub temporal_bandwidth: f64,
    pub k_r: Vec<f64>,
    pub k_v: Vec<f64>,
    pub n_sim: usize,
    pub kernel_sigma: f64,
    pub kernel_days: f64,
    pub residual_sigma: f64,
    /// Days for the tuned-vs-uniform difference rasters.
    pub comparison_days: Vec<usize>,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        let (sl, sb) = diag::default_lags(Domain::Spatial);
        let (tl, tb) = diag::default_lags(Domain::Temporal);
        Self {
            which: vec![Diagnostic::Pcf, Diagnostic::Kfun, Diagnostic::Residuals],
            intensity: IntensitySource::Fit,
            spatial_lags: sl,
            spatial_bandwidth: sb,
            temporal_lags: tl,
            temporal_bandwidth: tb,
            k_r: diag::lag_grid(10_000.0, 100),
            k_v: diag::lag_grid(100.0, 100),
            n_sim: diag::DEFAULT_N_SIM,
            kernel_sigma: diag::DEFAULT_KERNEL_SIGMA,
            kernel_days: diag::DEFAULT_KERNEL_DAYS,
            residual_sigma: 1000.0,
            comparison_days: vec![0],
        }
    }
}

/// JSON run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    /// House-density rasters by type.
    pub densities: Vec<DensityRef>,
    /// Fit result JSON used by `predict` and `diagnose`.
    pub fit_result: Option<PathBuf>,
    pub importance: ImportanceConfig,
    pub fit: FitConfig,
    pub predict: PredictConfig,
    pub diagnose: DiagnoseConfig,
    pub simulate: WorldConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.out, &mut cfg.events, &mut cfg.weather, &mut cfg.fit_result].into_iter().flatten() {
            fix(p);
        }
        for d in &mut cfg.densities {
            fix(&mut d.raster);
        }
        for c in &mut cfg.importance.covariates {
            fix(&mut c.raster);
        }
        Ok(cfg)
    }

    fn apply(&mut self, args: &CommonArgs) {
        if let Some(s) = args.seed {
            self.seed = Some(s);
        }
        if let Some(o) = &args.out {
            self.out = Some(o.clone());
        }
    }

    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidParameter("a seed is required (config \"seed\" or --seed)".into()))
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("an output directory is required (config \"out\" or --out)".into()))
    }

    fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::InvalidParameter(format!("config is missing \"{what}\"")))
    }

    /// House densities in type order, sharing one grid.
    fn densities(&self) -> Result<Vec<(u8, RasterField)>> {
        if self.densities.is_empty() {
            return Err(Error::InvalidParameter("config lists no \"densities\"".into()));
        }
        let mut out: Vec<(u8, RasterField)> = self
            .densities
            .iter()
            .map(|d| Ok((d.k, read_raster(&d.raster)?)))
            .collect::<Result<_>>()?;
        out.sort_by_key(|(k, _)| *k);
        Ok(out)
    }

    /// Weather and events with leap days removed.
    fn data(&self, grid: &crate::geom::SpatialGrid) -> Result<(TemporalCovariates, EventPattern)> {
        let weather = read_weather(Self::required(&self.weather, "weather")?)?;
        let events = read_raw_events(Self::required(&self.events, "events")?)?;
        drop_leap_days(&weather, &events, grid)
    }

    fn fit_result(&self) -> Result<FitResult> {
        let path = Self::required(&self.fit_result, "fit_result")?;
        let text = crate::io::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

/// Model structure from the densities; bases are placeholders until a fit
/// supplies them.
fn model_spec(densities: &[(u8, RasterField)]) -> Result<ModelSpec> {
    let basis = TemporalBasisSpec::harmonic_chill(1, 0)?;
    ModelSpec::new(
        densities
            .iter()
            .map(|(k, h)| TypeSpec {
                k: *k,
                basis,
                density: h.clone(),
            })
            .collect(),
    )
}

/// Parses `YYYY-MM-DD` through the calendar (Feb 29 maps to Feb 28) or a
/// day index.
fn parse_day(s: &str, cov: &TemporalCovariates) -> Result<usize> {
    let idx = match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        Ok(date) => {
            let cal = cov
                .calendar
                .ok_or_else(|| Error::InvalidParameter(format!("date {s} given but the weather has no calendar")))?;
            cal.prediction_index(date)
        }
        Err(_) => s
            .parse::<i64>()
            .map_err(|_| Error::InvalidParameter(format!("\"{s}\" is neither a date nor a day index")))?,
    };
    if idx < 0 || idx as usize >= cov.t_len() {
        return Err(Error::OutOfRange(format!("day {s} outside the weather range 0..{}", cov.t_len())));
    }
    Ok(idx as usize)
}

/// Days requested between two bounds, walking calendar dates when both are
/// dates so that February 29 yields the February 28 row.
fn day_range(from: &str, to: &str, cov: &TemporalCovariates) -> Result<Vec<usize>> {
    let dates = (
        NaiveDate::parse_from_str(from, "%Y-%m-%d"),
        NaiveDate::parse_from_str(to, "%Y-%m-%d"),
    );
    if let (Ok(a), Ok(b)) = dates {
        if b < a {
            return Err(Error::InvalidParameter(format!("range {from}..{to} is reversed")));
        }
        return a
            .iter_days()
            .take_while(|d| *d <= b)
            .map(|d| parse_day(&d.format("%Y-%m-%d").to_string(), cov))
            .collect();
    }
    let (a, b) = (parse_day(from, cov)?, parse_day(to, cov)?);
    if b < a {
        return Err(Error::InvalidParameter(format!("range {from}..{to} is reversed")));
    }
    Ok((a..=b).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Outcome of a command: success, or success with numerical failures.
enum Outcome {
    Ok,
    Partial,
}

fn cmd_importance(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed()?;
    let out = cfg.out()?;
    let densities = cfg.densities()?;
    let grid = densities[0].1.grid().clone();
    let (cov, events) = cfg.data(&grid)?;
    let mut rasters: Vec<(String, RasterField)> = densities.iter().map(|(k, h)| (format!("h{k}"), h.clone())).collect();
    for c in &cfg.importance.covariates {
        rasters.push((c.name.clone(), read_raster(&c.raster)?));
    }
    let ic = &cfg.importance;
    let st = forest::build_spatial_table(&events, &rasters, ic.box_cells)?;
    let spatial = if ic.exclude_boundary { st.interior()? } else { st.table.clone() };
    let daily: Vec<f64> = events.counts_per_day().iter().map(|&c| c as f64).collect();
    let temporal = forest::build_temporal_table(&daily, &cov)?;
    for (name, table, mtry, tag) in [
        ("spatial", &spatial, ic.mtry_spatial, 1u64),
        ("temporal", &temporal, ic.mtry_temporal, 2u64),
    ] {
        let mut fc = ForestConfig::for_vars(table.n_vars());
        fc.n_trees = ic.n_trees;
        fc.min_node_size = ic.min_node_size;
        if let Some(m) = mtry {
            fc.mtry = m;
        }
        let forest_seed = crate::rng::derive_seed(seed, &[tag]);
        let f = forest::fit_forest(table, fc, forest_seed)?;
        let reports: [ImportanceScores; 2] = [
            forest::traditional_importance(&f, table, forest_seed),
            forest::conditional_importance(&f, table, forest_seed),
        ];
        for r in &reports {
            let path = out.join(format!("importance_{name}_{}.csv", r.mode.as_str()));
            forest::write_importance(&path, std::slice::from_ref(r))?;
        }
        println!(
            "{name}: {} rows × {} columns, {} trees (mtry {}), out-of-bag R² {:.3}",
            table.n_rows(),
            table.n_columns(),
            fc.n_trees,
            fc.mtry,
            f.oob_r2(table)
        );
    }
    Ok(Outcome::Ok)
}

fn dummies_for(cfg: &RunConfig, spec: &ModelSpec) -> Vec<(u8, DummyIntensity)> {
    spec.types()
        .iter()
        .map(|t| {
            let r = cfg.fit.multipliers.get(&t.k).copied().unwrap_or(fit::default_multiplier(t.k));
            (t.k, DummyIntensity::Tuned { r })
        })
        .collect()
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        newton: cfg.fit.newton,
        level: cfg.fit.level,
        time_substeps: cfg.fit.time_substeps,
    }
}

fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed()?;
    let out = cfg.out()?;
    let densities = cfg.densities()?;
    let spec = model_spec(&densities)?;
    let (cov, events) = cfg.data(spec.grid())?;
    let report = fit::fit_model(
        &events,
        &spec,
        &dummies_for(cfg, &spec),
        &cfg.fit.ranges,
        &cov,
        &fit_options(cfg),
        seed,
    )?;
    write_json(&out.join("fit.json"), &report.result)?;
    write_json(&out.join("fit_report.json"), &report)?;
    let mut table = String::from("k,term,estimate\n");
    for f in &report.result.types {
        for (term, est) in f.table() {
            table.push_str(&format!("{},{term},{est}\n", f.k));
        }
    }
    write_atomic(&out.join("fit_table.csv"), table.as_bytes())?;

    for f in &report.result.types {
        let b = f.basis;
        println!(
            "type {}: o1={} o2={} o3={} o4={} speed={} interaction={}; {} iterations; ℓ = {:.6}; AIC = {:.4}; {} events, {} dummies",
            f.k, b.o1, b.o2, b.o3, b.o4, b.include_speed, b.include_interaction, f.iterations, f.log_likelihood, f.aic, f.n_data, f.n_dummy
        );
        for (term, est) in f.table() {
            println!("  {term:<16} {est}");
        }
    }
    for t in &report.term_tests {
        match &t.outcome {
            Some(o) => println!("type {} LRT {}: statistic {:.4}, dof {}, p = {:.4}", t.k, t.term, o.statistic, o.dof, o.p_value),
            None => println!("type {} LRT {}: {}", t.k, t.term, t.error.as_deref().unwrap_or("failed")),
        }
    }
    for (k, frac) in &report.rho_check {
        println!("type {k}: ρ ≥ 4λ̂ on {:.2}% of cell-days", 100.0 * frac);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for (k, e) in &report.failures {
        eprintln!("type {k} failed: {e}");
    }
    Ok(if report.failures.is_empty() { Outcome::Ok } else { Outcome::Partial })
}

fn cmd_predict(cfg: &RunConfig, args: &PredictArgs) -> Result<Outcome> {
    let out = cfg.out()?;
    let densities = cfg.densities()?;
    let spec = model_spec(&densities)?;
    let weather = read_weather(RunConfig::required(&cfg.weather, "weather")?)?;
    let (cov, _) = drop_leap_days(&weather, &[], spec.grid())?;
    let fit = cfg.fit_result()?;
    let spec = fit.model_spec(&spec)?;
    let level = cfg.predict.level.unwrap_or(fit.level);
    let from = args.from.clone().or(cfg.predict.from.clone()).unwrap_or_else(|| "0".into());
    let to = args
        .to
        .clone()
        .or(cfg.predict.to.clone())
        .unwrap_or_else(|| (cov.t_len() - 1).to_string());
    let days = day_range(&from, &to, &cov)?;
    let mut csv = String::from("t,lambda,lo,hi\n");
    for &d in &days {
        let p = fit::predict_regional(&fit, &spec, &cov, d..d + 1, level)?[0];
        csv.push_str(&format!("{},{},{},{}\n", fmt_f64(p.t), fmt_f64(p.lambda), fmt_f64(p.lo), fmt_f64(p.hi)));
    }
    write_atomic(&out.join("predict.csv"), csv.as_bytes())?;
    for f in &fit.types {
        let mut csv = String::from("t,lambda,lo,hi\n");
        for &d in &days {
            let p = fit::predict_type(f, &cov, d..d + 1, level)?[0];
            csv.push_str(&format!("{},{},{},{}\n", fmt_f64(p.t), fmt_f64(p.lambda), fmt_f64(p.lo), fmt_f64(p.hi)));
        }
        write_atomic(&out.join(format!("predict_k{}.csv", f.k)), csv.as_bytes())?;
    }
    for s in &cfg.predict.raster_days {
        let d = parse_day(s, &cov)?;
        write_raster(out.join(format!("predict_day{d}.asc")), &fit::prediction_raster(&fit, &spec, &cov, d)?)?;
    }
    println!("{} daily predictions from day {} to day {}", days.len(), days[0], days[days.len() - 1]);
    Ok(Outcome::Ok)
}

#[derive(Debug, Serialize)]
struct EnvelopeVerdict<'a> {
    inside: bool,
    n_sim: usize,
    statistic: &'a Statistic,
}

fn cmd_diagnose(cfg: &RunConfig, args: &DiagnoseArgs) -> Result<Outcome> {
    let out = cfg.out()?;
    let dc = &cfg.diagnose;
    let which = if args.which.is_empty() { dc.which.clone() } else { args.which.clone() };
    let densities = cfg.densities()?;
    let spec = model_spec(&densities)?;
    let (cov, events) = cfg.data(spec.grid())?;
    let needs_fit = dc.intensity == IntensitySource::Fit
        || which.iter().any(|w| matches!(w, Diagnostic::Envelope | Diagnostic::Residuals | Diagnostic::RhoTuning));
    let fitted = if needs_fit {
        let fit = cfg.fit_result()?;
        let model = fit.intensity_model(&spec, &cov.slice(0, events.t_len())?)?;
        Some((fit, model))
    } else {
        None
    };
    let plug_in: Box<dyn diag::PointIntensity> = match (dc.intensity, &fitted) {
        (IntensitySource::Fit, Some((_, m))) => Box::new(m.clone()),
        _ => Box::new(diag::kernel_intensity_estimate(&events, dc.kernel_sigma, dc.kernel_days)?),
    };
    for w in which {
        match w {
            Diagnostic::Pcf => {
                for (domain, lags, b, name) in [
                    (Domain::Spatial, &dc.spatial_lags, dc.spatial_bandwidth, "spatial"),
                    (Domain::Temporal, &dc.temporal_lags, dc.temporal_bandwidth, "temporal"),
                ] {
                    let lam = plug_in.projected(&events, domain)?;
                    let g = diag::pcf(&events, &lam, domain, lags, b)?;
                    diag::write_text(out.join(format!("pcf_{name}.csv")), &diag::format_curve(&g.lags, &g.values))?;
                }
            }
            Diagnostic::Kfun => {
                let k = diag::k_inhom(&events, &plug_in.full(&events)?, &dc.k_r, &dc.k_v)?;
                diag::write_text(out.join("kfun.csv"), &diag::format_k(&k))?;
            }
            Diagnostic::Envelope => {
                let (_, model) = fitted.as_ref().expect("fit loaded");
                let ecfg = EnvelopeConfig {
                    n_sim: dc.n_sim,
                    statistic: Statistic::Kfun { r: dc.k_r.clone(), v: dc.k_v.clone() },
                    spatial_sigma: dc.kernel_sigma,
                    temporal_bandwidth: dc.kernel_days,
                };
                let env = diag::envelope_test(model, model.grid(), events.t_len(), &events, &ecfg, cfg.seed()?)?;
                diag::write_text(out.join("envelope.csv"), &diag::format_envelope(&env))?;
                write_json(
                    &out.join("envelope_verdict.json"),
                    &EnvelopeVerdict {
                        inside: env.inside,
                        n_sim: dc.n_sim,
                        statistic: &ecfg.statistic,
                    },
                )?;
                println!("envelope: observed K {} the {}-simulation envelope", if env.inside { "inside" } else { "outside" }, dc.n_sim);
            }
            Diagnostic::Residuals => {
                let (_, model) = fitted.as_ref().expect("fit loaded");
                write_raster(out.join("residuals_spatial.asc"), &diag::residuals_spatial(model, &events, dc.residual_sigma)?)?;
                let monthly = diag::residuals_temporal(&model.daily_totals(), &events, cov.calendar.as_ref())?;
                diag::write_text(out.join("residuals_monthly.csv"), &diag::format_monthly(&monthly))?;
            }
            Diagnostic::RhoTuning => {
                let (fit, _) = fitted.as_ref().expect("fit loaded");
                let cmp = fit::compare_dummy_schemes(&events, &spec, fit, &cov, &fit_options(cfg), &dc.comparison_days, cfg.seed()?)?;
                let mut csv = String::from("t,tuned,uniform,difference\n");
                for (t, a, b, d) in &cmp.series {
                    csv.push_str(&format!("{},{},{},{}\n", fmt_f64(*t), fmt_f64(*a), fmt_f64(*b), fmt_f64(*d)));
                }
                diag::write_text(out.join("rho_tuning_series.csv"), &csv)?;
                for (d, r) in &cmp.rasters {
                    write_raster(out.join(format!("rho_tuning_day{d}.asc")), r)?;
                }
                write_json(&out.join("rho_tuning_fits.json"), &[&cmp.tuned, &cmp.uniform])?;
            }
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed()?;
    let out = cfg.out()?;
    let world = make_synthetic_world(&cfg.simulate, seed)?;
    world.save(out)?;
    let run = RunConfig {
        seed: Some(seed),
        out: Some(PathBuf::from("results")),
        events: Some(PathBuf::from("events.csv")),
        weather: Some(PathBuf::from("weather.csv")),
        densities: world
            .model
            .spec
            .types()
            .iter()
            .map(|t| DensityRef {
                k: t.k,
                raster: crate::sim::SyntheticWorld::raster_name(t.k),
            })
            .collect(),
        fit_result: Some(PathBuf::from("results/fit.json")),
        ..RunConfig::default()
    };
    write_json(&out.join("run.json"), &run)?;
    for w in &world.warnings {
        eprintln!("warning: {w}");
    }
    println!("expected count {}", fmt_f64(world.expected_count));
    println!("realized count {}", world.events.len());
    Ok(Outcome::Ok)
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// numerical failure, 2 on an input error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Partial) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(cmd: &Command) -> Result<Outcome> {
    let common = match cmd {
        Command::Importance(c) | Command::Fit(c) | Command::Simulate(c) => c,
        Command::Predict(p) => &p.common,
        Command::Diagnose(d) => &d.common,
    };
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply(common);
    match cmd {
        Command::Importance(_) => cmd_importance(&cfg),
        Command::Fit(_) => cmd_fit(&cfg),
        Command::Predict(p) => cmd_predict(&cfg, p),
        Command::Diagnose(d) => cmd_diagnose(&cfg, d),
        Command::Simulate(_) => cmd_simulate(&cfg),
    }
}

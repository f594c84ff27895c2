//! The `ehdstack` command-line front end.
//!
//! Subcommands map one-to-one onto the library: `predict` (forward model),
//! `fit-onset` / `fit-beta` / `degradation` (calibration fits on CSV logs),
//! `table1` (effective-drift-speed fit against the published
//! efficiency-decrease table), `optimize` (design-space sweep), and
//! `report` (headline-figure consistency check).
//!
//! File payloads are always strict SI with units in the JSON keys and CSV
//! headers; `--units lab` only switches the console summary to bench units
//! (mm, kV, mN/W). Outputs carry no timestamps, so reruns on identical
//! inputs are byte-identical. On failure the binary prints a
//! machine-readable error JSON to stderr and exits with a class-specific
//! code: 2 for parse/I-O errors, 3 for precondition violations, 4 for fit
//! failures, 5 for empty feasible or Pareto sets.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calibration::{
    consistency_report, degradation_metric_with, fit_beta1, fit_beta2, fit_onset,
    fit_table1_drift_speed, HeadlineFigures, MeasurementSeries, OnsetOptions,
    DEGRADATION_ENDPOINT_WINDOW_S, TABLE1_TOLERANCE_PP,
};
use crate::error::{Error, Result};
use crate::model::{predict, FluidEnvironment, LossModel, OperatingPoint, StageGeometry};
use crate::optimizer::{select, sweep, write_pareto_csv, DesignSpace, ParetoSet};

/// Unit preference for console summaries. File payloads stay SI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Units {
    #[default]
    Si,
    /// Bench units: millimeters, kilovolts, mN/W.
    Lab,
}

/// Parsed command line.
#[derive(Debug, Parser)]
#[command(
    name = "ehdstack",
    version,
    about = "Performance model, calibration fits, and design-space exploration \
             for multi-stage corona-discharge EHD thrusters"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration document; meaning depends on the subcommand
    /// (prediction setup, design space, onset-fit options, or headline
    /// figures).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Measurement CSV (repeatable). A metadata sidecar is expected next to
    /// each file with the extension `.json`.
    #[arg(long, global = true)]
    pub input: Vec<PathBuf>,

    /// Primary output path; sibling files reuse its stem. Defaults to
    /// `ehdstack-<subcommand>.json` in the working directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Unit preference for console summaries.
    #[arg(long, global = true, value_enum, default_value_t = Units::Si)]
    pub units: Units,

    /// Force-transfer loss factor override.
    #[arg(long, global = true)]
    pub beta1: Option<f64>,

    /// Inter-stage loss factor override.
    #[arg(long, global = true)]
    pub beta2: Option<f64>,

    /// Ion mobility override (m^2/(V s)).
    #[arg(long, global = true)]
    pub mu: Option<f64>,

    /// Air density override (kg/m^3).
    #[arg(long, global = true)]
    pub rho: Option<f64>,

    /// Inter-stage spacing ratio override.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,

    /// Stage count override.
    #[arg(long, global = true)]
    pub stages: Option<u32>,

    /// Drift gap override, in millimeters.
    #[arg(long = "gap-mm", global = true)]
    pub gap_mm: Option<f64>,

    /// Drift field override, in MV/m.
    #[arg(long = "field-MVpm", global = true)]
    pub field_mvpm: Option<f64>,

    /// Scalarization weight for `optimize`: 1 favors force density, 0
    /// favors efficiency.
    #[arg(long, global = true)]
    pub weight: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the forward model and emit a report plus a voltage-sweep CSV.
    Predict,
    /// Fit the corona onset voltage and Townsend coefficient from one CSV log.
    FitOnset,
    /// Fit loss factors: beta1 from one single-stage log, beta2 from two or
    /// more logs at distinct stage counts.
    FitBeta,
    /// Fractional current drop over a constant-voltage window.
    Degradation {
        /// Evaluation window (s).
        #[arg(long = "window-s", default_value_t = 100.0)]
        window_s: f64,
        /// Endpoint averaging window (s).
        #[arg(long = "endpoint-s", default_value_t = DEGRADATION_ENDPOINT_WINDOW_S)]
        endpoint_s: f64,
    },
    /// Reproduce the published efficiency-decrease table and report the
    /// fitted effective ion drift speed.
    Table1,
    /// Sweep a design space (JSON via --config) and emit the Pareto
    /// frontier as JSON and CSV.
    Optimize,
    /// Invert headline figures into implied geometry and bulk efficiency.
    Report,
}

impl Command {
    fn slug(&self) -> &'static str {
        match self {
            Command::Predict => "predict",
            Command::FitOnset => "fit-onset",
            Command::FitBeta => "fit-beta",
            Command::Degradation { .. } => "degradation",
            Command::Table1 => "table1",
            Command::Optimize => "optimize",
            Command::Report => "report",
        }
    }
}

/// Prediction setup accepted via `--config` on `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub geometry: StageGeometry,
    pub environment: FluidEnvironment,
    pub loss: LossModel,
    pub operating: OperatingPoint,
    /// Number of rows in the emitted voltage-sweep CSV.
    pub sweep_points: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            geometry: StageGeometry::new(1e-3, 2.0, 1e-4, 3),
            environment: FluidEnvironment::default(),
            loss: LossModel::default(),
            operating: OperatingPoint::new(1e6),
            sweep_points: 50,
        }
    }
}

// ---------- entry point ----------

/// Execute one parsed command line. Inputs are loaded and validated before
/// any computation runs.
pub fn run(config: RunConfig) -> Result<()> {
    match &config.command {
        Command::Predict => run_predict(&config),
        Command::FitOnset => run_fit_onset(&config),
        Command::FitBeta => run_fit_beta(&config),
        Command::Degradation {
            window_s,
            endpoint_s,
        } => run_degradation(&config, *window_s, *endpoint_s),
        Command::Table1 => run_table1(&config),
        Command::Optimize => run_optimize(&config),
        Command::Report => run_report(&config),
    }
}

/// Exit code class for an error: 2 parse/I-O, 3 precondition, 4 fit
/// failure, 5 empty result set.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CsvParse { .. } | Error::Io(_) | Error::Json(_) => 2,
        Error::InvalidInput(_)
        | Error::MismatchedGeometry(_)
        | Error::NonConstantVoltage { .. }
        | Error::InsufficientDuration { .. }
        | Error::GridTooLarge { .. } => 3,
        Error::InsufficientData { .. } | Error::FitDivergence(_) => 4,
        Error::EmptyFeasibleSet { .. } | Error::EmptyParetoSet => 5,
    }
}

/// Machine-readable error document printed to stderr on failure.
pub fn error_json(e: &Error) -> String {
    let mut doc = serde_json::json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
        }
    });
    if let Error::CsvParse { path, line, .. } = e {
        doc["error"]["path"] = serde_json::Value::from(path.as_str());
        doc["error"]["line"] = serde_json::Value::from(*line);
    }
    serde_json::to_string_pretty(&doc).expect("error document serializes")
}

// ---------- shared helpers ----------

fn out_path(config: &RunConfig) -> PathBuf {
    config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("ehdstack-{}.json", config.command.slug())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

fn environment_from_flags(config: &RunConfig) -> FluidEnvironment {
    let mut env = FluidEnvironment::default();
    if let Some(mu) = config.mu {
        env.ion_mobility_m2_per_vs = mu;
    }
    if let Some(rho) = config.rho {
        env.air_density_kg_per_m3 = rho;
    }
    env
}

fn loss_from_flags(config: &RunConfig) -> LossModel {
    let mut loss = LossModel::default();
    if let Some(b1) = config.beta1 {
        loss.beta1 = b1;
    }
    if let Some(b2) = config.beta2 {
        loss.beta2 = b2;
    }
    loss
}

fn load_json_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn sidecar_path(input: &Path) -> PathBuf {
    input.with_extension("json")
}

fn single_input<'a>(config: &'a RunConfig, what: &str) -> Result<&'a Path> {
    match config.input.as_slice() {
        [one] => Ok(one),
        other => Err(Error::InvalidInput(format!(
            "{what} takes exactly one --input CSV, got {}",
            other.len()
        ))),
    }
}

fn load_series(input: &Path) -> Result<MeasurementSeries> {
    MeasurementSeries::read(input, &sidecar_path(input))
}

/// Run `f` inside a rayon pool capped by `EHD_STACK_THREADS`, when set.
fn with_thread_cap<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match std::env::var("EHD_STACK_THREADS") {
        Ok(raw) => {
            let threads: usize = raw.trim().parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "EHD_STACK_THREADS must be a positive integer, got `{raw}`"
                ))
            })?;
            if threads == 0 {
                return Err(Error::InvalidInput(
                    "EHD_STACK_THREADS must be a positive integer, got `0`".into(),
                ));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            pool.install(f)
        }
        Err(_) => f(),
    }
}

// ---------- predict ----------

fn run_predict(config: &RunConfig) -> Result<()> {
    let mut setup: PredictConfig = match &config.config {
        Some(path) => load_json_config(path)?,
        None => PredictConfig::default(),
    };
    if let Some(n) = config.stages {
        setup.geometry.stage_count = n;
    }
    if let Some(gap_mm) = config.gap_mm {
        setup.geometry.drift_gap_m = gap_mm * 1e-3;
    }
    if let Some(gamma) = config.gamma {
        setup.geometry.spacing_ratio = gamma;
    }
    if let Some(field) = config.field_mvpm {
        setup.operating.drift_field_v_per_m = field * 1e6;
    }
    if let Some(mu) = config.mu {
        setup.environment.ion_mobility_m2_per_vs = mu;
    }
    if let Some(rho) = config.rho {
        setup.environment.air_density_kg_per_m3 = rho;
    }
    if let Some(b1) = config.beta1 {
        setup.loss.beta1 = b1;
    }
    if let Some(b2) = config.beta2 {
        setup.loss.beta2 = b2;
    }
    if setup.sweep_points == 0 {
        return Err(Error::InvalidInput("sweep_points must be positive".into()));
    }

    if let Some(warning) = setup.geometry.shielding_warning() {
        eprintln!("warning: {warning}");
    }

    let report = predict(
        &setup.geometry,
        &setup.environment,
        &setup.loss,
        &setup.operating,
    )?;
    let out = out_path(config);
    write_json(&out, &report)?;
    let csv_path = out.with_extension("csv");
    write_predict_sweep_csv(&setup, &csv_path)?;

    let gap = setup.geometry.drift_gap_m;
    let voltage = setup.operating.drift_field_v_per_m * gap;
    match config.units {
        Units::Si => println!(
            "{} stages, gap {:.4e} m, {:.4e} V: F = {:.4e} N, Gamma = {:.4e} N/m^3, \
             eta_ave = {:.4e} N/W, P = {:.4e} W",
            setup.geometry.stage_count,
            gap,
            voltage,
            report.total_force_newtons,
            report.force_density_n_per_m3,
            report.average_efficiency_n_per_w,
            report.electrical_power_w,
        ),
        Units::Lab => println!(
            "{} stages, gap {:.3} mm, {:.2} kV: F = {:.4} mN, Gamma = {:.1} N/m^3, \
             eta_ave = {:.4} mN/W, P = {:.4} W",
            setup.geometry.stage_count,
            gap * 1e3,
            voltage * 1e-3,
            report.total_force_newtons * 1e3,
            report.force_density_n_per_m3,
            report.average_efficiency_n_per_w * 1e3,
            report.electrical_power_w,
        ),
    }
    println!("report: {}", out.display());
    println!("sweep:  {}", csv_path.display());
    Ok(())
}

/// Voltage-sweep CSV: one row per applied voltage from `V_op / points` up
/// to the operating voltage, with per-stage outlet velocities.
fn write_predict_sweep_csv(setup: &PredictConfig, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let stages = setup.geometry.stage_count;
    let mut header = vec!["voltage_V".to_string(), "force_N".to_string()];
    for i in 1..=stages {
        header.push(format!("velocity_mps_stage{i}"));
    }
    header.push("efficiency_NpW".to_string());
    w.write_record(&header)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;

    let v_op = setup.operating.drift_field_v_per_m * setup.geometry.drift_gap_m;
    for k in 1..=setup.sweep_points {
        let voltage = v_op * k as f64 / setup.sweep_points as f64;
        let op = OperatingPoint::with_inlet(
            voltage / setup.geometry.drift_gap_m,
            setup.operating.inlet_velocity_m_per_s,
        );
        let r = predict(&setup.geometry, &setup.environment, &setup.loss, &op)?;
        let mut row = vec![voltage.to_string(), r.total_force_newtons.to_string()];
        for v in &r.stage_outlet_velocities_m_per_s {
            row.push(v.to_string());
        }
        row.push(r.average_efficiency_n_per_w.to_string());
        w.write_record(&row)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

// ---------- calibration subcommands ----------

fn run_fit_onset(config: &RunConfig) -> Result<()> {
    let input = single_input(config, "fit-onset")?;
    let options: OnsetOptions = match &config.config {
        Some(path) => load_json_config(path)?,
        None => OnsetOptions::default(),
    };
    let series = load_series(input)?;
    let fit = fit_onset(&series, &options)?;
    let out = out_path(config);
    write_json(&out, &fit)?;
    println!(
        "onset V0 = {:.1} V (+- {:.1} V), C = {:.4e} A/V^2, residual rms {:.3e} A",
        fit.onset_voltage_v.unwrap_or(f64::NAN),
        fit.onset_confidence_halfwidth_v.unwrap_or(f64::NAN),
        fit.townsend_coefficient_a_per_v2.unwrap_or(f64::NAN),
        fit.residual_rms,
    );
    for warning in &fit.warnings {
        eprintln!("warning: {warning}");
    }
    println!("fit: {}", out.display());
    Ok(())
}

fn run_fit_beta(config: &RunConfig) -> Result<()> {
    if config.input.is_empty() {
        return Err(Error::InvalidInput(
            "fit-beta needs one --input CSV (beta1) or several (beta2)".into(),
        ));
    }
    let env = environment_from_flags(config);
    let series: Vec<MeasurementSeries> = config
        .input
        .iter()
        .map(|p| load_series(p))
        .collect::<Result<_>>()?;
    let fit = if series.len() == 1 {
        fit_beta1(&series[0], &env)?
    } else {
        fit_beta2(&series, &env)?
    };
    let out = out_path(config);
    write_json(&out, &fit)?;
    if let Some(b1) = fit.fitted_beta1 {
        println!("beta1 = {b1:.4} (residual rms {:.3e} N)", fit.residual_rms);
    }
    if let Some(b2) = fit.fitted_beta2 {
        println!("beta2 = {b2:.4} (residual rms {:.3e} N)", fit.residual_rms);
        if let Some(slope) = fit.current_vs_stage_slope_a {
            println!("current vs stage count: {slope:.4e} A per stage");
        }
    }
    for warning in &fit.warnings {
        eprintln!("warning: {warning}");
    }
    println!("fit: {}", out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct DegradationOutput {
    degradation_fraction: f64,
    window_s: f64,
    endpoint_window_s: f64,
}

fn run_degradation(config: &RunConfig, window_s: f64, endpoint_s: f64) -> Result<()> {
    let input = single_input(config, "degradation")?;
    let series = load_series(input)?;
    let fraction = degradation_metric_with(&series, window_s, endpoint_s)?;
    let out = out_path(config);
    write_json(
        &out,
        &DegradationOutput {
            degradation_fraction: fraction,
            window_s,
            endpoint_window_s: endpoint_s,
        },
    )?;
    println!("current drop over {window_s} s: {:.2}%", fraction * 100.0);
    println!("result: {}", out.display());
    Ok(())
}

fn run_table1(config: &RunConfig) -> Result<()> {
    let fit = fit_table1_drift_speed();
    println!(
        "fitted effective ion drift speed: {:.1} m/s (mobility {:.4e} m^2/(V s))",
        fit.effective_drift_speed_m_per_s, fit.implied_ion_mobility_m2_per_vs,
    );
    println!("stages  beta2  published%  model%   error_pp");
    for cell in &fit.cells {
        println!(
            "{:>6}  {:>5}  {:>9.1}  {:>7.4}  {:>+8.4}",
            cell.stage_count, cell.beta2, cell.published_pp, cell.modeled_pp, cell.error_pp,
        );
    }
    println!(
        "max |error| = {:.4} pp (tolerance {} pp)",
        fit.max_abs_error_pp, TABLE1_TOLERANCE_PP,
    );
    if let Some(out) = &config.out {
        write_json(out, &fit)?;
        println!("fit: {}", out.display());
    }
    if fit.max_abs_error_pp > TABLE1_TOLERANCE_PP {
        return Err(Error::FitDivergence(format!(
            "worst cell misses the published table by {:.4} pp (tolerance {} pp)",
            fit.max_abs_error_pp, TABLE1_TOLERANCE_PP,
        )));
    }
    Ok(())
}

// ---------- optimize ----------

#[derive(Debug, Serialize)]
struct OptimizeOutput {
    #[serde(flatten)]
    pareto: ParetoSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<crate::optimizer::DesignPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection_weight: Option<f64>,
}

fn run_optimize(config: &RunConfig) -> Result<()> {
    let space_path = config.config.as_ref().ok_or_else(|| {
        Error::InvalidInput("optimize requires --config with a design-space JSON".into())
    })?;
    let space: DesignSpace = load_json_config(space_path)?;
    let env = environment_from_flags(config);
    let loss = loss_from_flags(config);

    if space.spacing_ratio.min < 2.0 {
        eprintln!(
            "warning: spacing_ratio grid reaches below 2; stages there are not \
             electrostatically shielded"
        );
    }

    let pareto = with_thread_cap(|| sweep(&space, &env, &loss))?;
    let selected = match config.weight {
        Some(w) => Some(select(&pareto, w)?),
        None => None,
    };

    let out = out_path(config);
    let csv_path = out.with_extension("csv");
    write_pareto_csv(&pareto, File::create(&csv_path)?)?;
    println!(
        "evaluated {} grid points, {} feasible, frontier size {}",
        pareto.provenance.evaluated_points,
        pareto.provenance.feasible_points,
        pareto.points.len(),
    );
    if let Some(point) = &selected {
        println!(
            "selected (w = {}): {} stages, gap {:.4e} m, E = {:.4e} V/m, \
             Gamma = {:.4e} N/m^3, eta_ave = {:.4e} N/W",
            config.weight.unwrap_or_default(),
            point.geometry.stage_count,
            point.geometry.drift_gap_m,
            point.operating.drift_field_v_per_m,
            point.force_density_n_per_m3,
            point.average_efficiency_n_per_w,
        );
    }
    write_json(
        &out,
        &OptimizeOutput {
            pareto,
            selected,
            selection_weight: config.weight,
        },
    )?;
    println!("frontier: {} and {}", out.display(), csv_path.display());
    Ok(())
}

// ---------- report ----------

fn run_report(config: &RunConfig) -> Result<()> {
    let mut headline: HeadlineFigures = match &config.config {
        Some(path) => load_json_config(path)?,
        None => HeadlineFigures::default(),
    };
    if let Some(n) = config.stages {
        headline.stage_count = n;
    }
    if let Some(gamma) = config.gamma {
        headline.spacing_ratio = gamma;
    }
    let report = consistency_report(&headline)?;
    let out = out_path(config);
    write_json(&out, &report)?;
    match config.units {
        Units::Si => println!(
            "implied drift gap {:.4e} m, device height {:.4e} m, bulk efficiency {:.4e} N/W",
            report.implied_drift_gap_m,
            report.implied_device_height_m,
            report.implied_bulk_efficiency_n_per_w,
        ),
        Units::Lab => println!(
            "implied drift gap {:.3} mm, device height {:.3} mm, bulk efficiency {:.3} mN/W",
            report.implied_drift_gap_m * 1e3,
            report.implied_device_height_m * 1e3,
            report.implied_bulk_efficiency_n_per_w * 1e3,
        ),
    }
    for notice in &report.notices {
        println!("notice: {notice}");
    }
    println!("report: {}", out.display());
    Ok(())
}

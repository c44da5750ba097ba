//! Command-line front end: JSON-configured runs of the decomposition,
//! saddle, manifold, control and experiment pipelines, with CSV/JSON and
//! binary exports for plotting.
//!
//! Exit codes: 0 success, 1 numerical failure inside a module, 2
//! configuration or schema error.

use clap::{Parser, Subcommand};
use lcs_control::advect::{ftle_field, write_ftle_binary, write_ftle_csv};
use lcs_control::control::{
    compile_control_field, program_amplitude, realized_smoothness_bound, ControlProgram,
};
use lcs_control::decomposition::{decompose, decompose_with_threshold};
use lcs_control::flow_model::{
    find_saddle, taylor_green, BoundingBox, GridSpec, PlanarVelocityField, SampledField,
};
use lcs_control::geom::Vec2;
use lcs_control::manifold::{state_series, write_states_csv};
use lcs_control::ridge_verify::{
    abrupt_controlled_flow, experiment_abrupt, experiment_finite_t, experiment_periodic,
    experiment_scaling, periodic_controlled_flow, write_abrupt_csv, write_finite_t_csv,
    write_periodic_csv, write_scaling_csv, AbruptParams, ExperimentParams, FiniteTParams,
    ScalingParams,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "lcsctl", about = "Manifold-direction analysis and control for planar flows")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Cap on worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split sampled velocity data into steady and unsteady parts.
    Decompose,
    /// Locate a saddle of the steady part and report its eigen-frame.
    Saddle,
    /// Leading-order hyperbolic trajectory and tangent-angle series.
    Manifold,
    /// Compile a control program into a velocity field.
    Control,
    /// Run a verification experiment.
    Experiment,
}

enum AppError {
    Config(String),
    Numeric(String),
}

impl From<lcs_control::Error> for AppError {
    fn from(e: lcs_control::Error) -> Self {
        AppError::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Numeric(format!("i/o failure: {e}"))
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Decompose => cmd_decompose(cli),
        Command::Saddle => cmd_saddle(cli),
        Command::Manifold => cmd_manifold(cli),
        Command::Control => cmd_control(cli),
        Command::Experiment => cmd_experiment(cli),
    }
}

fn load_config<T: serde::de::DeserializeOwned>(cli: &Cli) -> Result<T, AppError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(config_err)?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| AppError::Config("missing schema_version".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(AppError::Config(format!(
            "unsupported schema_version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    serde_json::from_value(value).map_err(config_err)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| AppError::Numeric(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared config fragments

/// Uniform time lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimeGridDef {
    start: f64,
    stop: f64,
    count: usize,
}

impl TimeGridDef {
    fn times(&self) -> Result<Vec<f64>, AppError> {
        if self.count < 2 || !(self.stop > self.start) {
            return Err(AppError::Config("time grid needs count >= 2 and stop > start".into()));
        }
        let n = self.count;
        Ok((0..n)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64)
            .collect())
    }
}

/// Velocity-field source for analysis commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FieldSpec {
    /// Built-in Taylor-Green flow.
    TaylorGreen { amplitude: f64 },
    /// Taylor-Green with the compiled periodic rotation control.
    PeriodicControlled { amplitude: f64, delta: f64, omega: f64, horizon: f64 },
    /// Taylor-Green with the compiled abrupt step/ramp control.
    AbruptControlled { amplitude: f64, delta: f64, horizon: f64 },
    /// Gridded samples from a header/payload file pair; the steady part is
    /// recovered by time averaging.
    Sampled { header: PathBuf },
}

impl FieldSpec {
    fn build(&self) -> Result<PlanarVelocityField, AppError> {
        match self {
            FieldSpec::TaylorGreen { amplitude } => Ok(taylor_green(*amplitude)),
            FieldSpec::PeriodicControlled { amplitude, delta, omega, horizon } => {
                Ok(periodic_controlled_flow(*amplitude, *delta, *omega, *horizon)?.0)
            }
            FieldSpec::AbruptControlled { amplitude, delta, horizon } => {
                Ok(abrupt_controlled_flow(*amplitude, *delta, *horizon)?.0)
            }
            FieldSpec::Sampled { header } => {
                let sampled = read_sampled(header)?;
                Ok(decompose(&sampled)?.into_field())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gridded-field files: JSON header + row-major little-endian f64 payload,
// two components per node per time.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampledHeader {
    nx: usize,
    ny: usize,
    x_bounds: [f64; 2],
    y_bounds: [f64; 2],
    times: Vec<f64>,
    payload: PathBuf,
}

fn read_sampled(header_path: &Path) -> Result<SampledField, AppError> {
    let text = fs::read_to_string(header_path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", header_path.display())))?;
    let header: SampledHeader = serde_json::from_str(&text).map_err(config_err)?;
    if header.nx < 2 || header.ny < 2 || header.times.is_empty() {
        return Err(AppError::Config("sampled field header has an empty grid".into()));
    }
    let payload_path = header_path.parent().unwrap_or(Path::new(".")).join(&header.payload);
    let mut bytes = Vec::new();
    fs::File::open(&payload_path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", payload_path.display())))?
        .read_to_end(&mut bytes)?;
    let n_nodes = header.nx * header.ny;
    let expected = header.times.len() * n_nodes * 2 * 8;
    if bytes.len() != expected {
        return Err(AppError::Config(format!(
            "payload {} has {} bytes, expected {expected}",
            payload_path.display(),
            bytes.len()
        )));
    }
    let grid = GridSpec::new(
        header.nx,
        header.ny,
        BoundingBox::new(header.x_bounds[0], header.x_bounds[1], header.y_bounds[0], header.y_bounds[1]),
    );
    let mut chunks = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let samples = header
        .times
        .iter()
        .map(|_| {
            (0..n_nodes)
                .map(|_| Vec2::new(chunks.next().unwrap(), chunks.next().unwrap()))
                .collect()
        })
        .collect();
    Ok(SampledField { grid, times: header.times, samples })
}

fn write_sampled(out_dir: &Path, stem: &str, sampled: &SampledField) -> Result<(), AppError> {
    let payload_name = format!("{stem}.bin");
    let header = SampledHeader {
        nx: sampled.grid.nx,
        ny: sampled.grid.ny,
        x_bounds: [sampled.grid.bounds.x_min, sampled.grid.bounds.x_max],
        y_bounds: [sampled.grid.bounds.y_min, sampled.grid.bounds.y_max],
        times: sampled.times.clone(),
        payload: PathBuf::from(&payload_name),
    };
    write_json(&out_dir.join(format!("{stem}.json")), &header)?;
    let mut out = BufWriter::new(fs::File::create(out_dir.join(payload_name))?);
    for slice in &sampled.samples {
        for v in slice {
            out.write_all(&v.x.to_le_bytes())?;
            out.write_all(&v.y.to_le_bytes())?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// decompose

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecomposeConfig {
    #[allow(dead_code)]
    schema_version: u32,
    input: FieldSpec,
    /// Sampling lattice for analytic inputs; ignored for sampled inputs.
    grid: Option<GridSpec>,
    times: Option<TimeGridDef>,
    threshold: Option<f64>,
}

fn cmd_decompose(cli: &Cli) -> Result<(), AppError> {
    let config: DecomposeConfig = load_config(cli)?;
    if let Some(th) = config.threshold {
        if !(th > 0.0) {
            return Err(AppError::Config("threshold must be positive".into()));
        }
    }
    let sampled = match &config.input {
        FieldSpec::Sampled { header } => read_sampled(header)?,
        other => {
            let grid = config
                .grid
                .ok_or_else(|| AppError::Config("analytic input requires a grid".into()))?;
            let times = config
                .times
                .as_ref()
                .ok_or_else(|| AppError::Config("analytic input requires times".into()))?
                .times()?;
            SampledField::from_field(&other.build()?, grid, times)
        }
    };
    let dec = match config.threshold {
        Some(th) => decompose_with_threshold(&sampled, th)?,
        None => decompose(&sampled)?,
    };
    write_json(&cli.out.join("decomposition_report.json"), &dec.report)?;
    let f_samples = SampledField {
        grid: dec.g_samples.grid,
        times: vec![0.0],
        samples: vec![dec.f_grid.clone()],
    };
    write_sampled(&cli.out, "steady", &f_samples)?;
    write_sampled(&cli.out, "unsteady", &dec.g_samples)?;
    if cli.verbose {
        println!(
            "eps = {:.6e}, |f| = {:.6e}, ratio = {:.6e}, valid = {}",
            dec.report.eps, dec.report.f_norm, dec.report.ratio, dec.report.valid
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// saddle

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaddleConfig {
    #[allow(dead_code)]
    schema_version: u32,
    field: FieldSpec,
    guess: [f64; 2],
}

fn cmd_saddle(cli: &Cli) -> Result<(), AppError> {
    let config: SaddleConfig = load_config(cli)?;
    let field = config.field.build()?;
    let frame = find_saddle(&field, Vec2::new(config.guess[0], config.guess[1]))?;
    write_json(&cli.out.join("saddle_frame.json"), &frame)?;
    println!(
        "a = ({:.12}, {:.12}), lambda_s = {:.12}, lambda_u = {:.12}",
        frame.a.x, frame.a.y, frame.lambda_s, frame.lambda_u
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// manifold

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldConfig {
    #[allow(dead_code)]
    schema_version: u32,
    field: FieldSpec,
    guess: [f64; 2],
    horizon: f64,
    times: TimeGridDef,
}

fn cmd_manifold(cli: &Cli) -> Result<(), AppError> {
    let config: ManifoldConfig = load_config(cli)?;
    if !(config.horizon > 0.0) {
        return Err(AppError::Config("horizon must be positive".into()));
    }
    let times = config.times.times()?;
    if times.iter().any(|t| t.abs() > config.horizon) {
        return Err(AppError::Config(format!(
            "sample times must lie inside [-{0}, {0}]",
            config.horizon
        )));
    }
    let field = config.field.build()?;
    let frame = find_saddle(&field, Vec2::new(config.guess[0], config.guess[1]))?;
    let states = state_series(&field, &frame, &times, config.horizon)?;
    let out = fs::File::create(cli.out.join("manifold_states.csv"))?;
    write_states_csv(&states, BufWriter::new(out))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// control

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlConfig {
    #[allow(dead_code)]
    schema_version: u32,
    program: ControlProgram,
    /// Optional sampling lattice for exporting the compiled field.
    export_grid: Option<GridSpec>,
    export_times: Option<TimeGridDef>,
}

#[derive(Debug, Serialize)]
struct ControlReport {
    amplitude: f64,
    smoothness_bound: f64,
    anchors: usize,
}

fn cmd_control(cli: &Cli) -> Result<(), AppError> {
    let config: ControlConfig = load_config(cli)?;
    let field = compile_control_field(&config.program)?;
    let report = ControlReport {
        amplitude: program_amplitude(&config.program, 201),
        smoothness_bound: realized_smoothness_bound(&field, &config.program, 41),
        anchors: config.program.anchors.len(),
    };
    write_json(&cli.out.join("control_report.json"), &report)?;
    if let (Some(grid), Some(times)) = (config.export_grid, &config.export_times) {
        let sampled = SampledField::from_field(&field, grid, times.times()?);
        write_sampled(&cli.out, "control_field", &sampled)?;
    }
    if cli.verbose {
        println!(
            "amplitude = {:.6e}, smoothness bound = {:.6e}",
            report.amplitude, report.smoothness_bound
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// experiment

fn default_scaling_deltas() -> Vec<f64> {
    vec![0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50]
}

fn default_finite_t_horizons() -> Vec<f64> {
    (0..21).map(|k| 0.2 + 0.04 * k as f64).collect()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
enum ExperimentKind {
    Periodic {
        #[serde(default)]
        params: ExperimentParams,
    },
    Scaling {
        #[serde(default = "default_scaling_deltas")]
        deltas: Vec<f64>,
        #[serde(default)]
        params: ScalingParams,
    },
    FiniteT {
        #[serde(default = "default_finite_t_horizons")]
        horizons: Vec<f64>,
        #[serde(default)]
        params: FiniteTParams,
    },
    Abrupt {
        #[serde(default)]
        params: AbruptParams,
    },
    FtleSnapshot {
        #[serde(default)]
        params: ExperimentParams,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    #[allow(dead_code)]
    schema_version: u32,
    experiment: ExperimentKind,
}

fn validate_params(p: &ExperimentParams) -> Result<(), AppError> {
    if !(p.step > 0.0 && p.horizon > 0.0 && p.delta >= 0.0 && p.amplitude > 0.0) {
        return Err(AppError::Config("step, horizon, amplitude must be positive".into()));
    }
    if p.grid.nx < 3 || p.grid.ny < 3 {
        return Err(AppError::Config("grid needs at least 3 nodes per axis".into()));
    }
    if !(p.threshold_frac > 0.0 && p.threshold_frac < 1.0) {
        return Err(AppError::Config("threshold_frac must be in (0, 1)".into()));
    }
    Ok(())
}

fn cmd_experiment(cli: &Cli) -> Result<(), AppError> {
    let config: ExperimentConfig = load_config(cli)?;
    match &config.experiment {
        ExperimentKind::Periodic { params } => {
            validate_params(params)?;
            let result = experiment_periodic(params)?;
            write_periodic_csv(&result, fs::File::create(cli.out.join("periodic.csv"))?)?;
            write_json(&cli.out.join("periodic_summary.json"), &result)?;
        }
        ExperimentKind::Scaling { deltas, params } => {
            validate_params(&params.base)?;
            let result = experiment_scaling(deltas, params)?;
            write_scaling_csv(&result, fs::File::create(cli.out.join("scaling.csv"))?)?;
            write_json(&cli.out.join("scaling_summary.json"), &result)?;
            if cli.verbose {
                println!("fitted exponent = {:.4}", result.exponent);
            }
        }
        ExperimentKind::FiniteT { horizons, params } => {
            validate_params(&params.base)?;
            let result = experiment_finite_t(horizons, params)?;
            write_finite_t_csv(&result, fs::File::create(cli.out.join("finite_t.csv"))?)?;
            write_json(&cli.out.join("finite_t_summary.json"), &result)?;
        }
        ExperimentKind::Abrupt { params } => {
            validate_params(&params.base)?;
            let result = experiment_abrupt(params)?;
            write_abrupt_csv(&result, fs::File::create(cli.out.join("abrupt.csv"))?)?;
            write_json(&cli.out.join("abrupt_summary.json"), &result)?;
        }
        ExperimentKind::FtleSnapshot { params } => {
            validate_params(params)?;
            let (field, _) = periodic_controlled_flow(
                params.amplitude,
                params.delta,
                params.omega,
                params.horizon,
            )?;
            let forward = ftle_field(&field, params.grid, 0.0, params.horizon, params.step)?;
            let backward = ftle_field(&field, params.grid, 0.0, -params.horizon, params.step)?;
            for (name, ftle) in [("ftle_forward", &forward), ("ftle_backward", &backward)] {
                write_ftle_csv(ftle, fs::File::create(cli.out.join(format!("{name}.csv")))?)?;
                write_ftle_binary(ftle, fs::File::create(cli.out.join(format!("{name}.bin")))?)?;
            }
        }
    }
    Ok(())
}

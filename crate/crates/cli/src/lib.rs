//! Command implementations behind the `axoneme` binary.

pub mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use axoneme::hopf::bifurcation_report;
use axoneme::measure::{cluster_run, error_table, sensitivity_scan, sweep_delta, ScanParam};
use axoneme::pde::{run, Grid, Model, PdeError, PdeSystem, Recorder};
use axoneme::series::{csv_field, write_number};
use axoneme::spectral::{integrate, FourierState, IntegrateOptions, SpectralError};
use axoneme::{RateFamily, TimeSeries};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("CFL violation: {0}")]
    Cfl(String),
    #[error("non-finite state: {0}")]
    NonFinite(String),
    #[error("no bifurcation: {0}")]
    NoBifurcation(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Cfl(_) => 3,
            CliError::NonFinite(_) => 4,
            CliError::NoBifurcation(_) => 5,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::CflViolation { .. } => CliError::Cfl(e.to_string()),
            PdeError::NonFinite(_) => CliError::NonFinite(e.to_string()),
            PdeError::ZeroSteps
            | PdeError::InvalidGrid(_)
            | PdeError::ReactionStepTooLarge(_)
            | PdeError::Model(_) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NonFinite(_) => CliError::NonFinite(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// `v<crate version>`.
pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub truncated: bool,
    pub error: Option<String>,
    pub config: RunConfig,
}

fn prefix_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    outputs: &[PathBuf],
    truncated: bool,
    error: Option<String>,
) -> Result<PathBuf, CliError> {
    let m = Manifest {
        command: command.into(),
        version: version_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        outputs: outputs.iter().map(|p| file_name(p)).collect(),
        truncated,
        error,
        config: cfg.clone(),
    };
    let path = prefix_path(&cfg.output, ".manifest.json");
    let mut text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

/// A table cell.
pub enum Cell {
    Num(f64),
    Opt(Option<f64>),
    Text(Option<String>),
}

/// RFC-4180 table with the same number format as time series.
pub fn table_csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = header
        .iter()
        .map(|h| csv_field(h))
        .collect::<Vec<_>>()
        .join(",");
    out.push_str("\r\n");
    for row in rows {
        for (i, c) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            match c {
                Cell::Num(v) | Cell::Opt(Some(v)) => write_number(&mut out, *v),
                Cell::Opt(None) | Cell::Text(None) => {}
                Cell::Text(Some(s)) => out.push_str(&csv_field(s)),
            }
        }
        out.push_str("\r\n");
    }
    out
}

/// Runs the configured model and writes `<out>.csv` plus the manifest.
/// A failed run still writes what it recorded, flagged as truncated.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let params = cfg.params_at_delta();
    let family = RateFamily::from_params(&params);
    let rates = family
        .rates(params.omega, params.ell)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let steps = cfg.step_count();
    let (series, failure): (TimeSeries, Option<CliError>) = match cfg.engine {
        config::EngineConfig::Pde { cells, .. } => {
            let grid = Grid::new(cells, params.ell, cfg.dt())?;
            let sys = PdeSystem::new(cfg.model, grid, &params, &rates)?;
            let init = match cfg.model {
                Model::NRow(_) => sys.random_shift_state(cfg.seed, cfg.cluster.shift_amplitude)?,
                _ => sys.perturbed_state(cfg.x0)?,
            };
            match run(&sys, init, steps, &Recorder::every(cfg.record_stride)) {
                Ok(o) => (o.series, None),
                Err(e) => (e.partial, Some(e.source.into())),
            }
        }
        config::EngineConfig::Ode { dt, n_max } => {
            if cfg.model != Model::TwoRow {
                return Err(CliError::Config(
                    "the ode engine covers the two-row model only".into(),
                ));
            }
            let mut s = FourierState::equilibrium(&rates, n_max);
            s.x = cfg.x0;
            let opts = IntegrateOptions {
                stride: cfg.record_stride,
                record_modes: true,
            };
            match integrate(&s, &params, &rates, steps as f64 * dt, dt, &opts) {
                Ok(r) => (r.series, None),
                Err(e) => (e.partial, Some(e.source.into())),
            }
        }
    };
    let csv = prefix_path(&cfg.output, ".csv");
    write_file(&csv, series.to_csv_string().as_bytes())?;
    let manifest = write_manifest(
        cfg,
        "simulate",
        std::slice::from_ref(&csv),
        series.truncated,
        failure.as_ref().map(|e| e.to_string()),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(vec![csv, manifest]),
    }
}

/// Writes the bifurcation report as `<out>.report.json`. When `tau` has no
/// root the report is still written and the command fails with code 5.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let params = cfg.params_at_delta();
    let family = RateFamily::from_params(&cfg.params);
    let n_rows = match cfg.model {
        Model::NRow(n) => Some(n),
        _ => None,
    };
    let report = bifurcation_report(&params, &family, &cfg.sweep.deltas, n_rows)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let path = prefix_path(&cfg.output, ".report.json");
    let mut text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    let ok = report.omega0_param.is_some() && report.validity.supercritical();
    let error = (!ok).then(|| report.notes.join("; "));
    let manifest = write_manifest(
        cfg,
        "analyze",
        std::slice::from_ref(&path),
        false,
        error.clone(),
    )?;
    match error {
        Some(e) => Err(CliError::NoBifurcation(e)),
        None => Ok(vec![path, manifest]),
    }
}

/// Amplitude/frequency per delta as `<out>.sweep.csv`, plus the
/// theory/ODE/PDE comparison as `<out>.errors.csv`.
pub fn cmd_sweep(cfg: &RunConfig, with_errors: bool) -> Result<Vec<PathBuf>, CliError> {
    let opts = cfg.measure_options();
    let rows = sweep_delta(&cfg.sweep.deltas, &cfg.params, &opts);
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Num(r.delta),
                Cell::Opt(r.amplitude),
                Cell::Opt(r.frequency),
                Cell::Text(r.error.clone()),
            ]
        })
        .collect();
    let path = prefix_path(&cfg.output, ".sweep.csv");
    write_file(
        &path,
        table_csv(&["delta", "amplitude", "frequency", "error"], &table).as_bytes(),
    )?;
    let mut outputs = vec![path];
    if with_errors {
        let ode = axoneme::measure::MeasureOptions {
            engine: axoneme::measure::Engine::ode_default(),
            ..opts
        };
        let pde = match opts.engine {
            axoneme::measure::Engine::Pde { .. } => opts,
            _ => axoneme::measure::MeasureOptions {
                engine: axoneme::measure::Engine::pde_default(),
                ..opts
            },
        };
        let rows = error_table(&cfg.sweep.deltas, &cfg.params, &ode, &pde);
        let table: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Num(r.delta),
                    Cell::Num(r.rho_theory),
                    Cell::Opt(r.rho_ode),
                    Cell::Opt(r.rho_pde),
                    Cell::Opt(r.relerr_theory_pde),
                    Cell::Opt(r.relerr_ode_pde),
                ]
            })
            .collect();
        let path = prefix_path(&cfg.output, ".errors.csv");
        write_file(
            &path,
            table_csv(
                &[
                    "delta",
                    "rho_theory",
                    "rho_ode",
                    "rho_pde",
                    "relerr_theory_pde",
                    "relerr_ode_pde",
                ],
                &table,
            )
            .as_bytes(),
        )?;
        outputs.push(path);
    }
    let manifest = write_manifest(cfg, "sweep", &outputs, false, None)?;
    outputs.push(manifest);
    Ok(outputs)
}

/// `<out>.sensitivity.csv` for the configured parameter.
pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let param: ScanParam = cfg.sensitivity.param.parse().map_err(CliError::Config)?;
    let rows = sensitivity_scan(
        param,
        cfg.sensitivity.rel_range,
        cfg.sensitivity.points,
        &cfg.params,
        &cfg.measure_options(),
    );
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Num(r.value),
                Cell::Num(r.rel_change),
                Cell::Opt(r.amplitude),
                Cell::Opt(r.frequency),
                Cell::Text(r.error.clone()),
            ]
        })
        .collect();
    let path = prefix_path(&cfg.output, ".sensitivity.csv");
    write_file(
        &path,
        table_csv(
            &[
                param.name(),
                "rel_change",
                "amplitude",
                "frequency",
                "error",
            ],
            &table,
        )
        .as_bytes(),
    )?;
    let manifest = write_manifest(cfg, "sensitivity", std::slice::from_ref(&path), false, None)?;
    Ok(vec![path, manifest])
}

/// Partition written as `<out>.clusters.json`, the trajectory as `<out>.csv`.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let opts = cfg.cluster_options()?;
    let params = cfg.params_at_delta();
    let out = cluster_run(&params, cfg.seed, &opts).map_err(|e| CliError::Other(e.to_string()))?;
    let csv = prefix_path(&cfg.output, ".csv");
    write_file(&csv, out.series.to_csv_string().as_bytes())?;
    let json = prefix_path(&cfg.output, ".clusters.json");
    let (body, error) = match &out.report {
        Ok(r) => (serde_json::to_value(r).expect("report serialises"), None),
        Err(e) => (
            serde_json::json!({ "error": e.to_string(), "clusters": [] }),
            Some(e.to_string()),
        ),
    };
    let mut text =
        serde_json::to_string_pretty(&body).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_file(&json, text.as_bytes())?;
    let manifest = write_manifest(cfg, "cluster", &[csv.clone(), json.clone()], false, error)?;
    Ok(vec![csv, json, manifest])
}

/// Default configuration as pretty JSON.
pub fn cmd_params() -> String {
    let mut s = serde_json::to_string_pretty(&RunConfig::default()).expect("defaults serialise");
    s.push('\n');
    s
}

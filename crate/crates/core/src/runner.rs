//! Running scenarios to disk and parameter sweeps.
//!
//! A run directory holds `trajectory.csv`, `summary.toml` and
//! `manifest.toml`. The manifest lists every file with its SHA-256 and
//! flags runs that stopped early.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{
    check_identifiability, convergence_metrics, rabi_analysis, ConvergenceMetrics,
    IdentifiabilityReport, RabiReport,
};
use crate::dynamics::transitions;
use crate::estimator::EstimatorMode;
use crate::ode::Trajectory;
use crate::scenario::{Scenario, ScenarioError};
use crate::simulate::{integrate_with_partial, rabi_period, SimulationResult};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("simulation failed: {message} (partial outputs in {dir})")]
    Simulation { message: String, dir: String },
    #[error("sweep over `{0}` has an empty value list")]
    EmptyAxis(String),
    #[error("cannot set `{path}`: {message}")]
    BadPath { path: String, message: String },
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(_) | RunError::EmptyAxis(_) | RunError::BadPath { .. } => 2,
            RunError::Io { .. } | RunError::Simulation { .. } => 1,
        }
    }
}

fn io_err(path: &Path, e: impl ToString) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Command-line style overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Sets the measurement seed to `s` and the control seed to `s + 1`.
    pub seed_override: Option<u64>,
    pub record_stride: Option<usize>,
}

impl RunOptions {
    pub fn apply(&self, scenario: &mut Scenario) {
        if let Some(s) = self.seed_override {
            scenario.seeds.measurement = s;
            scenario.seeds.control = s.wrapping_add(1);
        }
        if let Some(k) = self.record_stride {
            scenario.integration.record_stride = Some(k);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub scenario: String,
    pub mode: EstimatorMode,
    pub status: String,
    pub steps: usize,
    pub step: f64,
    pub horizon: f64,
    pub recorded_samples: usize,
    pub runtime_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub theta: Vec<f64>,
    pub final_theta_hat: Vec<f64>,
    /// `max_p |mean(θ̂_p) - θ_p|` over the final quarter of the record.
    pub tail_mean_error: f64,
    /// Largest `|innovation|` over the final quarter of the record.
    pub tail_max_innovation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    /// Largest recorded `dV/dt`.
    pub max_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub max_plant_purity_defect: f64,
    pub max_estimator_purity_defect: f64,
    pub max_trace_defect: f64,
    pub max_hermitian_defect: f64,
    pub max_recorded_trace_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: RunInfo,
    pub estimates: Estimates,
    pub convergence: ConvergenceMetrics,
    pub lyapunov: LyapunovSummary,
    pub conservation: Conservation,
    pub identifiability: IdentifiabilityReport,
    pub rabi: RabiReport,
    pub config: Scenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub scenario: String,
    /// `complete` or `partial`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
}

/// Convergence tolerance used for `time_to_tolerance`.
pub const DEFAULT_TOLERANCE: f64 = 0.05;

/// Writes the trajectory as CSV: LF line endings, 17 significant digits.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), RunError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let n = traj.dim;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("y_{j}")));
    header.extend((1..=n).map(|j| format!("yhat_{j}")));
    header.extend(
        transitions(n)
            .iter()
            .map(|(l, k)| format!("thetahat_{}_{}", l + 1, k + 1)),
    );
    header.extend(["V", "e", "purity_hat", "trace_drift"].map(String::from));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    let f = |x: f64| format!("{x:.16e}");
    for i in 0..traj.len() {
        let mut row = Vec::with_capacity(header.len());
        row.push(f(traj.times[i]));
        row.extend(traj.y[i].iter().map(|&x| f(x)));
        row.extend(traj.y_hat[i].iter().map(|&x| f(x)));
        row.extend(traj.theta_hat[i].iter().map(|&x| f(x)));
        row.push(f(traj.lyapunov[i]));
        row.push(f(traj.innovation[i]));
        row.push(f(traj.purity_hat[i]));
        row.push(f(traj.trace_drift[i]));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn tail_start(traj: &Trajectory) -> usize {
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let t0 = 0.75 * t_end;
    traj.times.partition_point(|&t| t < t0)
}

/// `max_p |mean(θ̂_p) - θ_p|` over the final quarter of the record.
pub fn tail_mean_error(traj: &Trajectory, truth: &[f64]) -> f64 {
    let tail = &traj.theta_hat[tail_start(traj)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    (0..truth.len())
        .map(|p| {
            let mean = tail.iter().map(|v| v[p]).sum::<f64>() / tail.len() as f64;
            (mean - truth[p]).abs()
        })
        .fold(0.0, f64::max)
}

pub fn tail_max_innovation(traj: &Trajectory) -> f64 {
    traj.innovation[tail_start(traj)..]
        .iter()
        .fold(0.0, |m, e| m.max(e.abs()))
}

fn summarize(
    scenario: &Scenario,
    setup: &crate::simulate::Setup,
    traj: &Trajectory,
    result: Option<&SimulationResult>,
    status: &str,
    runtime: f64,
) -> RunSummary {
    let theta = setup.system.theta().to_vec();
    let window = rabi_period(&setup.gains, &theta).unwrap_or(setup.integration.horizon / 50.0);
    let fold = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    RunSummary {
        run: RunInfo {
            scenario: scenario.name().to_string(),
            mode: setup.mode,
            status: status.to_string(),
            steps: setup.integration.steps(),
            step: setup.integration.step,
            horizon: setup.integration.steps() as f64 * setup.integration.step,
            recorded_samples: traj.len(),
            runtime_seconds: runtime,
            warnings: result.map(|r| r.warnings.clone()).unwrap_or_default(),
        },
        estimates: Estimates {
            final_theta_hat: traj.final_theta_hat().unwrap_or(&[]).to_vec(),
            tail_mean_error: tail_mean_error(traj, &theta),
            tail_max_innovation: tail_max_innovation(traj),
            theta: theta.clone(),
        },
        convergence: convergence_metrics(traj, &theta, DEFAULT_TOLERANCE, window),
        lyapunov: LyapunovSummary {
            initial: traj.lyapunov.first().copied().unwrap_or(f64::NAN),
            last: traj.lyapunov.last().copied().unwrap_or(f64::NAN),
            max_rate: traj
                .lyapunov_rate
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
        },
        conservation: Conservation {
            max_plant_purity_defect: result.map_or(f64::NAN, |r| r.max_plant_purity_defect),
            max_estimator_purity_defect: result.map_or(f64::NAN, |r| r.max_estimator_purity_defect),
            max_trace_defect: result.map_or(f64::NAN, |r| r.max_trace_defect),
            max_hermitian_defect: result.map_or(f64::NAN, |r| r.max_hermitian_defect),
            max_recorded_trace_drift: fold(&traj.trace_drift),
        },
        identifiability: check_identifiability(setup.system.omega(), setup.system.dipole()),
        rabi: rabi_analysis(
            &setup.gains.amplitudes,
            &theta,
            setup.gains.state_gain,
            &setup.gains.param_gains,
        ),
        config: scenario.clone(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn file_entry(dir: &Path, name: &str) -> Result<FileEntry, RunError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    Ok(FileEntry {
        name: name.to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub result: SimulationResult,
}

/// Runs `scenario` and writes its outputs into `out_dir`. A simulation
/// failure still writes the partial trajectory, the summary and a manifest
/// marked `partial` before returning the error.
pub fn run(
    scenario: &Scenario,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<RunReport, RunError> {
    let mut scenario = scenario.clone();
    options.apply(&mut scenario);
    let setup = scenario.prepare()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    info!(
        "running {} for {} steps",
        scenario.name(),
        setup.integration.steps()
    );
    let start = Instant::now();
    let outcome = integrate_with_partial(&setup);
    let runtime = start.elapsed().as_secs_f64();

    let (traj, result, error) = match &outcome {
        Ok(r) => (&r.trajectory, Some(r), None),
        Err(f) => (&f.partial, None, Some(f.error.to_string())),
    };
    let status = if error.is_some() {
        "partial"
    } else {
        "complete"
    };
    write_trajectory_csv(traj, &out_dir.join(TRAJECTORY_FILE))?;
    let summary = summarize(&scenario, &setup, traj, result, status, runtime);
    let text = toml::to_string(&summary).map_err(|e| io_err(&out_dir.join(SUMMARY_FILE), e))?;
    write_text(&out_dir.join(SUMMARY_FILE), &text)?;

    let manifest = Manifest {
        generator: format!("qhid-core {}", env!("CARGO_PKG_VERSION")),
        scenario: scenario.name().to_string(),
        status: status.to_string(),
        error: error.clone(),
        files: vec![
            file_entry(out_dir, TRAJECTORY_FILE)?,
            file_entry(out_dir, SUMMARY_FILE)?,
        ],
    };
    let text = toml::to_string(&manifest).map_err(|e| io_err(&out_dir.join(MANIFEST_FILE), e))?;
    write_text(&out_dir.join(MANIFEST_FILE), &text)?;

    match outcome {
        Ok(result) => Ok(RunReport {
            dir: out_dir.to_path_buf(),
            summary,
            result,
        }),
        Err(_) => Err(RunError::Simulation {
            message: error.unwrap_or_default(),
            dir: out_dir.display().to_string(),
        }),
    }
}

/// Sets a dotted key (`estimator.state_gain`) in a TOML document, creating
/// missing tables. Integers are widened to floats where the current value
/// is a float.
pub fn set_dotted(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), RunError> {
    let bad = |m: &str| RunError::BadPath {
        path: path.to_string(),
        message: m.to_string(),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let mut cur = doc;
    for key in &keys[..keys.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| bad("not a table"))?;
        cur = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| bad("parent is not a table"))?;
    let last = keys[keys.len() - 1].to_string();
    let value = match (table.get(&last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(last, value);
    Ok(())
}

/// Parses a command-line value as TOML (`0.5`, `[1, 2]`, `"sin"`), falling
/// back to a bare string.
pub fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<toml::Value>,
    pub replicates: usize,
    /// Worker threads; 0 lets the pool decide.
    pub parallel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: String,
    pub replicate: usize,
    pub seed_measurement: u64,
    pub seed_control: u64,
    pub status: String,
    pub max_final_error: f64,
    pub tail_mean_error: f64,
    pub final_lyapunov: f64,
    pub error: String,
}

/// Runs the base scenario once per `(value, replicate)`. Replicate `r`
/// uses seeds `base + r`, so every value sees the same noise realizations.
/// Each row is written under `out_dir/row_NNNN`; failures are recorded in
/// the row rather than aborting the sweep.
pub fn sweep(
    base: &Scenario,
    spec: &SweepSpec,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<Vec<SweepRow>, RunError> {
    if spec.values.is_empty() {
        return Err(RunError::EmptyAxis(spec.parameter.clone()));
    }
    let mut base = base.clone();
    options.apply(&mut base);
    let doc = toml::Value::try_from(&base).map_err(|e| RunError::BadPath {
        path: spec.parameter.clone(),
        message: e.to_string(),
    })?;
    // check the path once up front so a typo fails before any run
    {
        let mut probe = doc.clone();
        set_dotted(&mut probe, &spec.parameter, spec.values[0].clone())?;
        let s: Scenario = probe
            .try_into()
            .map_err(|e: toml::de::Error| RunError::BadPath {
                path: spec.parameter.clone(),
                message: e.to_string(),
            })?;
        s.prepare()?;
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let replicates = spec.replicates.max(1);
    let jobs: Vec<(usize, usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..replicates).map(move |r| (v * replicates + r, v, r)))
        .collect();
    let one = |&(index, v, r): &(usize, usize, usize)| -> SweepRow {
        let value = &spec.values[v];
        let mut row = SweepRow {
            index,
            value: value.to_string(),
            replicate: r,
            seed_measurement: base.seeds.measurement.wrapping_add(r as u64),
            seed_control: base.seeds.control.wrapping_add(r as u64),
            status: "invalid".into(),
            max_final_error: f64::NAN,
            tail_mean_error: f64::NAN,
            final_lyapunov: f64::NAN,
            error: String::new(),
        };
        let mut d = doc.clone();
        let scenario = set_dotted(&mut d, &spec.parameter, value.clone()).and_then(|_| {
            d.try_into::<Scenario>().map_err(|e| RunError::BadPath {
                path: spec.parameter.clone(),
                message: e.to_string(),
            })
        });
        let mut scenario = match scenario {
            Ok(s) => s,
            Err(e) => {
                row.error = e.to_string();
                return row;
            }
        };
        scenario.seeds.measurement = row.seed_measurement;
        scenario.seeds.control = row.seed_control;
        let dir = out_dir.join(format!("row_{index:04}"));
        match run(&scenario, &dir, &RunOptions::default()) {
            Ok(rep) => {
                row.status = "complete".into();
                row.max_final_error = rep.summary.convergence.max_final_error;
                row.tail_mean_error = rep.summary.estimates.tail_mean_error;
                row.final_lyapunov = rep.summary.lyapunov.last;
            }
            Err(e) => {
                row.status = match e {
                    RunError::Simulation { .. } => "partial",
                    RunError::Scenario(_) => "invalid",
                    _ => "failed",
                }
                .into();
                row.error = e.to_string();
            }
        }
        row
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if spec.parallel > 0 {
        builder = builder.num_threads(spec.parallel);
    }
    let pool = builder.build().map_err(|e| io_err(out_dir, e))?;
    let rows: Vec<SweepRow> = pool.install(|| jobs.par_iter().map(one).collect());

    let path = out_dir.join(SWEEP_FILE);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| io_err(&path, e))?;
    for row in &rows {
        w.serialize(row).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(rows)
}

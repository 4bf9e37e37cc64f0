//! Scenario files (TOML, schema version 1) and the built-in registry.
//!
//! Complex entries are written either as plain numbers or as strings of the
//! form `"a+bi"`; matrices are lists of rows. Unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::density::NORM_TOL;
use crate::diagnostics::rabi_analysis;
use crate::dynamics::{
    couplings_from_dipole, transitions, ControlField, MeasurementModel, QuantumSystem, Tone,
    Waveform,
};
use crate::estimator::{EstimatorMode, GainConfig};
use crate::linalg::{ComplexMatrix, HermitianOperator};
use crate::ode::{default_step, IntegrationConfig};
use crate::simulate::{drive_map, Setup};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown scenario `{0}`")]
    Unknown(String),
}

fn invalid(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A complex number that serializes as a float when real and as `"a+bi"`
/// otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex(pub C64);

impl From<f64> for Complex {
    fn from(x: f64) -> Self {
        Complex(C64::new(x, 0.0))
    }
}

impl fmt::Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.0;
        if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
            write!(f, "{:?}-{:?}i", z.re, -z.im)
        } else {
            write!(f, "{:?}+{:?}i", z.re, z.im)
        }
    }
}

impl FromStr for Complex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t.is_empty() {
            return Err("empty complex literal".into());
        }
        if let Ok(x) = t.parse::<f64>() {
            return Ok(Complex(C64::new(x, 0.0)));
        }
        let body = t
            .strip_suffix('i')
            .ok_or_else(|| format!("`{s}` is not of the form a+bi"))?;
        // split at the last sign that is not part of an exponent or leading
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                split = Some(i);
                break;
            }
        }
        let (re, im) = match split {
            Some(i) => (&body[..i], &body[i..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            other => other,
        };
        let re: f64 = re.parse().map_err(|_| format!("bad real part in `{s}`"))?;
        let im: f64 = im
            .parse()
            .map_err(|_| format!("bad imaginary part in `{s}`"))?;
        Ok(Complex(C64::new(re, im)))
    }
}

impl Serialize for Complex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.im == 0.0 && !self.0.im.is_sign_negative() {
            s.serialize_f64(self.0.re)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Complex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Complex;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string of the form \"a+bi\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Complex, E> {
                Ok(Complex::from(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Complex, E> {
                Ok(Complex::from(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Complex, E> {
                Ok(Complex::from(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Complex, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// A scalar gain shared by every transition, or one gain per transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamGain {
    Scalar(f64),
    PerTransition(Vec<f64>),
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// Free-Hamiltonian eigenvalues `ω_j` (eigenbasis form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Full Hamiltonian in the measurement basis (alternative to `levels`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<Vec<Vec<Complex>>>,
    /// Real symmetric, zero-diagonal dipole matrix.
    pub dipole: Vec<Vec<f64>>,
    pub initial_state: Vec<Complex>,
}

/// A tone at every transition frequency `|ω_l - ω_k|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonantDrive {
    pub amplitude: f64,
    #[serde(default)]
    pub waveform: Waveform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tones: Vec<Tone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonant: Option<ResonantDrive>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub amplitude_bias: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub bias: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub noise_sigma: f64,
    /// Defaults to the integration step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period: Option<f64>,
    /// Observed levels, 1-based. Defaults to every level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default)]
    pub mode: EstimatorMode,
    pub state_gain: f64,
    pub param_gain: ParamGain,
    pub initial_dipole: Vec<Vec<f64>>,
    pub initial_state: Vec<Complex>,
    /// Averaged mode: include the detuning drift `ω_lk - ν` in the
    /// estimator. Off by default, since the Bohr frequencies are normally
    /// not known to this estimator.
    #[serde(default, skip_serializing_if = "is_false")]
    pub detuning_known: bool,
    /// Must be set to run the second averaged (true-θ) system.
    #[serde(default, skip_serializing_if = "is_false")]
    pub theory_verification: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    /// Defaults to `2π / (100 · max(fastest tone, largest Rabi gap))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default = "yes")]
    pub renormalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub measurement: u64,
    #[serde(default)]
    pub control: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub metadata: Metadata,
    pub system: SystemSpec,
    pub control: ControlSpec,
    #[serde(default)]
    pub measurement: MeasurementSpec,
    pub estimator: EstimatorSpec,
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub seeds: Seeds,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.prepare()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn name(&self) -> &str {
        &self.metadata.name
    }

    /// Validates the scenario and builds the simulation inputs.
    pub fn prepare(&self) -> Result<Setup, ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(invalid(
                "version",
                format!(
                    "unsupported schema version {}, expected {SCHEMA_VERSION}",
                    self.version
                ),
            ));
        }
        let dipole = real_matrix("system.dipole", &self.system.dipole)?;
        let n = dipole.dim();
        let theta =
            couplings_from_dipole(&dipole).map_err(|e| invalid("system.dipole", e.to_string()))?;

        let system = match (&self.system.levels, &self.system.hamiltonian) {
            (Some(levels), None) => {
                if levels.len() != n {
                    return Err(invalid(
                        "system.levels",
                        format!("{} levels for a {n}x{n} dipole", levels.len()),
                    ));
                }
                QuantumSystem::new(levels.clone(), theta)
                    .map_err(|e| invalid("system.levels", e.to_string()))?
            }
            (None, Some(rows)) => {
                let h = complex_matrix("system.hamiltonian", rows)?;
                if h.dim() != n {
                    return Err(invalid(
                        "system.hamiltonian",
                        "dimension differs from the dipole",
                    ));
                }
                let h = HermitianOperator::new(h)
                    .map_err(|e| invalid("system.hamiltonian", e.to_string()))?;
                QuantumSystem::from_hamiltonian(&h, theta)
                    .map_err(|e| invalid("system.hamiltonian", e.to_string()))?
            }
            _ => {
                return Err(invalid(
                    "system",
                    "give exactly one of `levels` and `hamiltonian`",
                ))
            }
        };
        let initial_state = state_vector("system.initial_state", &self.system.initial_state, n)?;

        // control
        let mut tones = self.control.tones.clone();
        if let Some(r) = &self.control.resonant {
            for (l, k) in transitions(n) {
                let w = (system.omega()[l] - system.omega()[k]).abs();
                tones.push(Tone {
                    amplitude: r.amplitude,
                    frequency: w,
                    waveform: r.waveform,
                });
            }
        }
        if tones
            .iter()
            .any(|t| !t.amplitude.is_finite() || !t.frequency.is_finite())
        {
            return Err(invalid(
                "control.tones",
                "amplitudes and frequencies must be finite",
            ));
        }
        if !(self.control.noise_sigma >= 0.0) {
            return Err(invalid("control.noise_sigma", "must be non-negative"));
        }
        let control = ControlField {
            tones,
            amplitude_bias: self.control.amplitude_bias,
            noise_sigma: self.control.noise_sigma,
            seed: self.seeds.control,
        };

        // estimator
        let est = &self.estimator;
        let pairs = n * (n - 1) / 2;
        let mu_hat = real_matrix("estimator.initial_dipole", &est.initial_dipole)?;
        if mu_hat.dim() != n {
            return Err(invalid(
                "estimator.initial_dipole",
                format!("expected a {n}x{n} matrix"),
            ));
        }
        let theta_hat0 = couplings_from_dipole(&mu_hat)
            .map_err(|e| invalid("estimator.initial_dipole", e.to_string()))?;
        let state_hat0 = state_vector("estimator.initial_state", &est.initial_state, n)?;
        if !(est.state_gain > 0.0 && est.state_gain.is_finite()) {
            return Err(invalid("estimator.state_gain", "must be strictly positive"));
        }
        let param_gains = match &est.param_gain {
            ParamGain::Scalar(g) => vec![*g; pairs],
            ParamGain::PerTransition(v) => {
                if v.len() != pairs {
                    return Err(invalid(
                        "estimator.param_gain",
                        format!("expected {pairs} values, got {}", v.len()),
                    ));
                }
                v.clone()
            }
        };
        if param_gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(invalid("estimator.param_gain", "must be strictly positive"));
        }
        match est.mode {
            EstimatorMode::SecondAveraged => {
                if !est.theory_verification {
                    return Err(invalid(
                        "estimator.theory_verification",
                        "the second averaged system uses the true couplings; set theory_verification = true",
                    ));
                }
                if n != 2 {
                    return Err(invalid(
                        "estimator.mode",
                        "second_averaged is defined for two levels only",
                    ));
                }
            }
            EstimatorMode::Averaged if !system.is_eigenbasis() => {
                return Err(invalid(
                    "estimator.mode",
                    "averaged mode needs the system written in its eigenbasis (`levels`)",
                ));
            }
            EstimatorMode::Unnormalized if n != 2 => {
                return Err(invalid(
                    "estimator.mode",
                    "the unnormalized observer is defined for two levels only",
                ));
            }
            _ => {}
        }
        if let Some(eps) = est.regime_epsilon {
            if !(eps > 0.0) {
                return Err(invalid(
                    "estimator.regime_epsilon",
                    "must be strictly positive",
                ));
            }
        }
        let map = drive_map(&system, &control);
        let gains = GainConfig {
            state_gain: est.state_gain,
            param_gains,
            amplitudes: map.amplitudes.clone(),
            detuning: if est.detuning_known {
                map.detunings.clone()
            } else {
                vec![0.0; pairs]
            },
            drive_angle: map.angles.clone(),
        };

        // integration
        let int = &self.integration;
        let step = match int.step {
            Some(h) => h,
            None => {
                let rabi = rabi_analysis(
                    &map.amplitudes,
                    system.theta(),
                    est.state_gain,
                    &gains.param_gains,
                );
                let max_rabi =
                    rabi.omega.last().unwrap_or(&0.0) - rabi.omega.first().unwrap_or(&0.0);
                default_step(control.max_frequency(), max_rabi)
            }
        };
        let mut integration = IntegrationConfig::new(step, int.horizon);
        if let Some(s) = int.record_stride {
            integration.record_stride = s;
        }
        integration.renormalize = int.renormalize;
        integration
            .validate(control.max_frequency())
            .map_err(|e| invalid("integration.step", e.to_string()))?;
        if int.snapshot_stride == Some(0) {
            return Err(invalid("integration.snapshot_stride", "must be at least 1"));
        }

        // measurement
        let m = &self.measurement;
        let sample_period = m.sample_period.unwrap_or(step);
        check_multiple("measurement.delay", m.delay, step, true)?;
        check_multiple("measurement.sample_period", sample_period, step, false)?;
        if !(m.noise_sigma >= 0.0) {
            return Err(invalid("measurement.noise_sigma", "must be non-negative"));
        }
        let channels = match &m.channels {
            None => (0..n).collect(),
            Some(c) => {
                if c.is_empty() {
                    return Err(invalid("measurement.channels", "must not be empty"));
                }
                let mut seen = vec![false; n];
                let mut out = Vec::new();
                for &j in c {
                    if j == 0 || j > n {
                        return Err(invalid(
                            "measurement.channels",
                            format!("channel {j} is outside 1..={n}"),
                        ));
                    }
                    if seen[j - 1] {
                        return Err(invalid(
                            "measurement.channels",
                            format!("channel {j} is repeated"),
                        ));
                    }
                    seen[j - 1] = true;
                    out.push(j - 1);
                }
                out
            }
        };
        let measurement = MeasurementModel {
            delay: m.delay,
            bias: m.bias,
            noise_sigma: m.noise_sigma,
            seed: self.seeds.measurement,
            sample_period,
            channels,
        };

        Ok(Setup {
            system,
            initial_state,
            control,
            measurement,
            mode: est.mode,
            gains,
            initial_theta_hat: theta_hat0,
            initial_state_hat: state_hat0,
            integration,
            snapshot_stride: int.snapshot_stride,
            regime_epsilon: est.regime_epsilon,
        })
    }
}

fn check_multiple(key: &str, value: f64, step: f64, allow_zero: bool) -> Result<(), ScenarioError> {
    if !(value >= 0.0 && value.is_finite()) || (!allow_zero && value == 0.0) {
        return Err(invalid(key, "must be a non-negative finite time"));
    }
    let ratio = value / step;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(invalid(
            key,
            format!("{value} is not an integer multiple of the step {step}"),
        ));
    }
    Ok(())
}

fn real_matrix(key: &str, rows: &[Vec<f64>]) -> Result<ComplexMatrix, ScenarioError> {
    ComplexMatrix::from_real_rows(rows).map_err(|e| invalid(key, e.to_string()))
}

fn complex_matrix(key: &str, rows: &[Vec<Complex>]) -> Result<ComplexMatrix, ScenarioError> {
    let rows: Vec<Vec<C64>> = rows
        .iter()
        .map(|r| r.iter().map(|z| z.0).collect())
        .collect();
    ComplexMatrix::from_rows(&rows).map_err(|e| invalid(key, e.to_string()))
}

fn state_vector(key: &str, v: &[Complex], n: usize) -> Result<Vec<C64>, ScenarioError> {
    if v.len() != n {
        return Err(invalid(
            key,
            format!("expected {n} components, got {}", v.len()),
        ));
    }
    let psi: Vec<C64> = v.iter().map(|z| z.0).collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= NORM_TOL) {
        return Err(invalid(
            key,
            format!("state vector has norm {norm}, expected 1"),
        ));
    }
    Ok(psi.iter().map(|z| z / norm).collect())
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Scenario::from_toml_str(&text)
}

pub fn write(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    std::fs::write(path, scenario.to_toml_string()).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads a built-in by name, or a scenario file otherwise.
pub fn resolve(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin(name_or_path) {
        return Ok(s);
    }
    let p = Path::new(name_or_path);
    if p.exists() {
        return load(p);
    }
    Err(ScenarioError::Unknown(name_or_path.to_string()))
}

// ---------------------------------------------------------------------------
// built-ins

fn unit(v: &[f64]) -> Vec<Complex> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| Complex::from(x / norm)).collect()
}

fn tone(amplitude: f64, frequency: f64, waveform: Waveform) -> Tone {
    Tone {
        amplitude,
        frequency,
        waveform,
    }
}

fn two_level(name: &str, description: &str) -> Scenario {
    Scenario {
        version: SCHEMA_VERSION,
        metadata: Metadata {
            name: name.into(),
            description: description.into(),
        },
        system: SystemSpec {
            levels: Some(vec![0.5, -0.5]),
            hamiltonian: None,
            dipole: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            initial_state: unit(&[1.0, 1.0]),
        },
        control: ControlSpec {
            tones: vec![tone(1.0, 1.0, Waveform::Sin)],
            resonant: None,
            amplitude_bias: 0.0,
            noise_sigma: 0.0,
        },
        measurement: MeasurementSpec {
            channels: Some(vec![1]),
            ..Default::default()
        },
        estimator: EstimatorSpec {
            mode: EstimatorMode::Full,
            state_gain: 1.0,
            param_gain: ParamGain::Scalar(0.1),
            initial_dipole: vec![vec![0.0, 1.5], vec![1.5, 0.0]],
            initial_state: unit(&[1.0, 2.0]),
            detuning_known: false,
            theory_verification: false,
            regime_epsilon: None,
        },
        integration: IntegrationSpec {
            step: Some(2.0 * PI / 100.0),
            horizon: 50.0 * PI,
            record_stride: None,
            renormalize: true,
            snapshot_stride: None,
        },
        seeds: Seeds::default(),
    }
}

fn fig1() -> Scenario {
    two_level(
        "fig1-2level",
        "2-level identification: H=(w/2)sz, mu=theta sx with theta=1, w=1, u(t)=sin(t); \
         Gamma=1, gamma=0.1, thetahat(0)=1.5, T=50 pi",
    )
}

fn fig3(gamma: f64, name: &str, description: &str) -> Scenario {
    Scenario {
        version: SCHEMA_VERSION,
        metadata: Metadata {
            name: name.into(),
            description: description.into(),
        },
        system: SystemSpec {
            levels: Some(vec![0.0, 1.0, 3.0]),
            hamiltonian: None,
            dipole: vec![
                vec![0.0, 1.3, 1.0],
                vec![1.3, 0.0, -1.5],
                vec![1.0, -1.5, 0.0],
            ],
            initial_state: unit(&[1.0, 2.0, 5.0]),
        },
        control: ControlSpec {
            tones: (1..=3)
                .map(|k| tone(0.1, k as f64, Waveform::Sin))
                .collect(),
            resonant: None,
            amplitude_bias: 0.0,
            noise_sigma: 0.0,
        },
        measurement: MeasurementSpec::default(),
        estimator: EstimatorSpec {
            mode: EstimatorMode::Full,
            state_gain: 0.05,
            param_gain: ParamGain::Scalar(gamma),
            initial_dipole: vec![
                vec![0.0, 1.2, 0.9],
                vec![1.2, 0.0, -1.7],
                vec![0.9, -1.7, 0.0],
            ],
            initial_state: unit(&[1.0, 2.0, 3.0]),
            detuning_known: false,
            theory_verification: false,
            regime_epsilon: None,
        },
        integration: IntegrationSpec {
            step: None,
            horizon: 1600.0,
            record_stride: Some(10),
            renormalize: true,
            snapshot_stride: None,
        },
        seeds: Seeds::default(),
    }
}

fn fig5() -> Scenario {
    let h = [
        [0.0833, -0.0038, -0.0087, 0.0041],
        [-0.0038, 0.0647, 0.0083, 0.0038],
        [-0.0087, 0.0083, 0.0036, -0.0076],
        [0.0041, 0.0038, -0.0076, 0.0357],
    ];
    Scenario {
        version: SCHEMA_VERSION,
        metadata: Metadata {
            name: "fig5-4level".into(),
            description:
                "4-level identification with the printed 4x4 H and mu; resonant sin tones at every \
                          |lambda_l - lambda_k|, A=0.01, Gamma=1, gamma=0.5, T=1e5"
                    .into(),
        },
        system: SystemSpec {
            levels: None,
            hamiltonian: Some(
                h.iter()
                    .map(|r| r.iter().map(|&x| Complex::from(x)).collect())
                    .collect(),
            ),
            dipole: vec![
                vec![0.0, 5.0, -1.0, 0.0],
                vec![5.0, 0.0, 6.0, -1.5],
                vec![-1.0, 6.0, 0.0, 7.0],
                vec![0.0, -1.5, 7.0, 0.0],
            ],
            initial_state: unit(&[1.0, 1.0, 1.0, 1.0]),
        },
        control: ControlSpec {
            tones: Vec::new(),
            resonant: Some(ResonantDrive {
                amplitude: 0.01,
                waveform: Waveform::Sin,
            }),
            amplitude_bias: 0.0,
            noise_sigma: 0.0,
        },
        measurement: MeasurementSpec::default(),
        estimator: EstimatorSpec {
            mode: EstimatorMode::Full,
            state_gain: 1.0,
            param_gain: ParamGain::Scalar(0.5),
            initial_dipole: vec![
                vec![0.0, 6.0, -1.5, 0.05],
                vec![6.0, 0.0, 7.0, -2.0],
                vec![-1.5, 7.0, 0.0, 6.0],
                vec![0.05, -2.0, 6.0, 0.0],
            ],
            initial_state: unit(&[1.0, 2.0, 3.0, 4.0]),
            detuning_known: false,
            theory_verification: false,
            regime_epsilon: None,
        },
        integration: IntegrationSpec {
            step: None,
            horizon: 1e5,
            record_stride: Some(100),
            renormalize: true,
            snapshot_stride: None,
        },
        seeds: Seeds::default(),
    }
}

fn fig6() -> Scenario {
    let mut s = two_level(
        "fig6-noisy-meas",
        "fig1-2level with a noisy measurement y(t)=tr(P rho(t-0.3))+0.06+0.07w, sampled every step h=0.05",
    );
    s.integration.step = Some(0.05);
    s.measurement.delay = 0.3;
    s.measurement.bias = 0.06;
    s.measurement.noise_sigma = 0.07;
    s.seeds = Seeds {
        measurement: 6,
        control: 0,
    };
    s
}

fn fig7() -> Scenario {
    let mut s = two_level(
        "fig7-noisy-control",
        "fig1-2level with a noisy control u(t)=(A+0.03)sin(t)+0.07w, A=1",
    );
    s.control.amplitude_bias = 0.03;
    s.control.noise_sigma = 0.07;
    s.seeds = Seeds {
        measurement: 0,
        control: 7,
    };
    s
}

fn detuned() -> Scenario {
    let mut s = two_level(
        "detuned-2level",
        "averaged (frequency-free) estimator on a 2-level system with w=10 driven at w_r=w-0.01*A*theta",
    );
    let omega = 10.0;
    let detuning = 0.01 * 1.0 * 1.0;
    s.system.levels = Some(vec![omega / 2.0, -omega / 2.0]);
    s.control.tones = vec![tone(1.0, omega - detuning, Waveform::Sin)];
    s.estimator.mode = EstimatorMode::Averaged;
    s.integration.step = None;
    s
}

fn dyn_a2() -> Scenario {
    let mut s = two_level(
        "theory-dynA2",
        "second averaged 2-level system (true theta and constant zeta); the Lyapunov function \
         must be non-increasing at every step",
    );
    s.system.initial_state = vec![
        Complex::from(1.0 / 5f64.sqrt()),
        Complex(C64::new(0.0, 2.0 / 5f64.sqrt())),
    ];
    s.estimator.mode = EstimatorMode::SecondAveraged;
    s.estimator.theory_verification = true;
    s.estimator.initial_state = unit(&[2.0, 1.0]);
    s.control.tones = vec![tone(1.0, 1.0, Waveform::Cos)];
    s
}

/// `(name, description)` of every built-in scenario.
pub fn list() -> Vec<(String, String)> {
    builtins()
        .into_iter()
        .map(|s| (s.metadata.name, s.metadata.description))
        .collect()
}

pub fn builtins() -> Vec<Scenario> {
    vec![
        fig1(),
        fig3(1.0, "fig3-3level", "3-level identification: H=diag(0,1,3), u=0.1(sin t+sin 2t+sin 3t), Gamma=0.05, gamma=1, T=1600"),
        fig3(0.5, "fig3-3level-gamma05", "fig3-3level with the alternate parameter gain gamma_lk=0.5"),
        fig5(),
        fig6(),
        fig7(),
        detuned(),
        dyn_a2(),
    ]
}

pub fn builtin(name: &str) -> Option<Scenario> {
    builtins().into_iter().find(|s| s.metadata.name == name)
}

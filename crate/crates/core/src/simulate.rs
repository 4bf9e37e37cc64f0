//! Lockstep integration of the plant and one estimator.
//!
//! The coupled state `(ρ, ρ̂, θ̂)` is advanced with RK4. The estimator only
//! ever sees the measured output stream:
//!
//! - with no delay and a sample period equal to the step, the output is
//!   evaluated at every RK stage (continuous measurement) with its noise
//!   held over the step;
//! - otherwise the most recent sample is held over the step (zero-order
//!   hold) and is read from a ring buffer of past populations pre-filled
//!   with `y(0)`.
//!
//! The plant sees the applied control (bias and dither included); the
//! estimator sees the commanded field only.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::density::purity;
use crate::dynamics::liouville_rhs;
use crate::dynamics::{
    measured_output, populations, transitions, ControlField, DynamicsError, MeasurementModel,
    NoiseStream, OutputHistory, QuantumSystem,
};
use crate::estimator::{
    averaged_estimator_rhs, full_estimator_rhs, second_averaged_lyapunov,
    second_averaged_lyapunov_rate, second_averaged_rhs, unnormalized_observer_rhs,
    unnormalized_parameter_rhs, EstimatorError, EstimatorMode, GainConfig, KnownModel,
};
use crate::linalg::{nearest_pure_state, ComplexMatrix};
use crate::ode::{rk4_step, IntegrationConfig, OdeError, OdeState, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid setup: {0}")]
    Setup(String),
}

/// Everything needed to run one simulation, already validated.
#[derive(Clone, Debug)]
pub struct Setup {
    pub system: QuantumSystem,
    pub initial_state: Vec<C64>,
    pub control: ControlField,
    pub measurement: MeasurementModel,
    pub mode: EstimatorMode,
    pub gains: GainConfig,
    pub initial_theta_hat: Vec<f64>,
    pub initial_state_hat: Vec<C64>,
    pub integration: IntegrationConfig,
    /// Record `(t, ρ, ρ̂)` every this many recorded samples.
    pub snapshot_stride: Option<usize>,
    /// Averaging-regime ε; `None` skips the regime check.
    pub regime_epsilon: Option<f64>,
}

/// Outcome of [`integrate`].
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub trajectory: Trajectory,
    pub final_rho: ComplexMatrix,
    pub final_rho_hat: ComplexMatrix,
    pub final_theta_hat: Vec<f64>,
    /// Largest `|tr ρ² - 1|` of the plant before the per-step retraction.
    pub max_plant_purity_defect: f64,
    /// Largest `|tr ρ̂² - 1|` of the estimator before the retraction.
    pub max_estimator_purity_defect: f64,
    /// Largest `|tr ρ̂ - 1|` before the retraction.
    pub max_trace_defect: f64,
    /// Largest `max|ρ - ρ†|` over both states before the retraction.
    pub max_hermitian_defect: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

/// Per-transition drive description derived from the tone list: the tone
/// closest to each `|ω_lk|` drives that transition if it lies within half
/// the smallest spacing between distinct transition frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveMap {
    pub amplitudes: Vec<f64>,
    pub angles: Vec<f64>,
    /// `ω_lk - s ν` for the matched tone (zero when undriven).
    pub detunings: Vec<f64>,
    pub tone_index: Vec<Option<usize>>,
}

pub fn drive_map(system: &QuantumSystem, control: &ControlField) -> DriveMap {
    let freqs = system.transition_frequencies();
    let mut abs: Vec<f64> = freqs.iter().map(|w| w.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut spacing = f64::INFINITY;
    for w in abs.windows(2) {
        let d = w[1] - w[0];
        if d > 1e-12 {
            spacing = spacing.min(d);
        }
    }
    let pairs = freqs.len();
    let mut map = DriveMap {
        amplitudes: vec![0.0; pairs],
        angles: vec![0.0; pairs],
        detunings: vec![0.0; pairs],
        tone_index: vec![None; pairs],
    };
    for (p, &w) in freqs.iter().enumerate() {
        let tol = if spacing.is_finite() {
            0.5 * spacing
        } else {
            0.5 * w.abs()
        };
        let best = control
            .tones
            .iter()
            .enumerate()
            .map(|(i, tone)| (i, (tone.frequency.abs() - w.abs()).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if let Some((i, dist)) = best {
            if dist < tol {
                let tone = &control.tones[i];
                let s = if w >= 0.0 { 1.0 } else { -1.0 };
                let nu = tone.frequency.abs();
                map.amplitudes[p] = tone.amplitude;
                map.angles[p] = s * tone.waveform.phase();
                map.detunings[p] = w - s * nu;
                map.tone_index[p] = Some(i);
            }
        }
    }
    map
}

/// The coupled integration state.
#[derive(Clone, Debug)]
struct Coupled {
    rho: ComplexMatrix,
    rho_hat: ComplexMatrix,
    psi: Vec<C64>,
    theta: Vec<f64>,
}

impl OdeState for Coupled {
    fn axpy(&mut self, a: f64, other: &Self) {
        self.rho.axpy(a, &other.rho);
        self.rho_hat.axpy(a, &other.rho_hat);
        for (x, y) in self.psi.iter_mut().zip(&other.psi) {
            *x += y * a;
        }
        self.theta.axpy(a, &other.theta);
    }

    fn is_finite(&self) -> bool {
        self.rho.is_finite()
            && self.rho_hat.is_finite()
            && self
                .psi
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite())
            && self.theta.iter().all(|x| x.is_finite())
    }
}

/// Inputs held constant across the four RK stages of one step.
struct HeldInputs {
    control_noise: f64,
    /// Continuous measurement: per-level noise draws.
    measurement_noise: Vec<f64>,
    /// Zero-order hold: the held sample.
    held_output: Option<Vec<f64>>,
}

struct Engine<'a> {
    setup: &'a Setup,
    known: KnownModel,
    zeta: ComplexMatrix,
    theta_true: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn output(&self, held: &HeldInputs, rho: &ComplexMatrix) -> Vec<f64> {
        match &held.held_output {
            Some(y) => y.clone(),
            None => {
                let m = &self.setup.measurement;
                populations(rho)
                    .into_iter()
                    .enumerate()
                    .map(|(j, p)| {
                        p + m.bias
                            + m.noise_sigma * held.measurement_noise.get(j).copied().unwrap_or(0.0)
                    })
                    .collect()
            }
        }
    }

    fn rhs(
        &self,
        t: f64,
        x: &Coupled,
        held: &HeldInputs,
    ) -> Result<(Coupled, Vec<f64>), SimulationError> {
        let setup = self.setup;
        let n = setup.system.dim();
        let zero = ComplexMatrix::zeros(n);
        if setup.mode == EstimatorMode::SecondAveraged {
            let (d, dt) = second_averaged_rhs(
                &x.rho_hat,
                x.theta[0],
                &self.zeta,
                self.theta_true[0],
                &setup.gains,
            )?;
            let y = populations(&self.zeta);
            return Ok((
                Coupled {
                    rho: zero,
                    rho_hat: d,
                    psi: Vec::new(),
                    theta: vec![dt],
                },
                y,
            ));
        }
        let u_plant = setup.control.value(t, held.control_noise);
        let u_est = setup.control.nominal(t);
        let d_rho = liouville_rhs(
            &x.rho,
            setup.system.hamiltonian(),
            setup.system.dipole(),
            u_plant,
        );
        let y = self.output(held, &x.rho);
        let out = match setup.mode {
            EstimatorMode::Full => {
                let (d, dt) =
                    full_estimator_rhs(&x.rho_hat, &x.theta, &y, u_est, &self.known, &setup.gains)?;
                Coupled {
                    rho: d_rho,
                    rho_hat: d,
                    psi: Vec::new(),
                    theta: dt,
                }
            }
            EstimatorMode::Averaged => {
                let (d, dt) = averaged_estimator_rhs(
                    &x.rho_hat,
                    &x.theta,
                    &y,
                    &self.known.channels,
                    &setup.gains,
                )?;
                Coupled {
                    rho: d_rho,
                    rho_hat: d,
                    psi: Vec::new(),
                    theta: dt,
                }
            }
            EstimatorMode::Unnormalized => {
                let dpsi = unnormalized_observer_rhs(
                    &x.psi,
                    &y,
                    u_est,
                    &self.known,
                    &x.theta,
                    setup.gains.state_gain,
                )?;
                let dt = unnormalized_parameter_rhs(
                    &x.psi,
                    &y,
                    u_est,
                    &self.known.channels,
                    &setup.gains.param_gains,
                );
                Coupled {
                    rho: d_rho,
                    rho_hat: zero,
                    psi: dpsi,
                    theta: dt,
                }
            }
            EstimatorMode::SecondAveraged => unreachable!(),
        };
        Ok((out, y))
    }

    /// Estimator density matrix and its time derivative (the unnormalized
    /// mode is normalized here).
    fn estimator_view(&self, x: &Coupled, dx: &Coupled) -> (ComplexMatrix, ComplexMatrix) {
        if self.setup.mode != EstimatorMode::Unnormalized {
            return (x.rho_hat.clone(), dx.rho_hat.clone());
        }
        let n = x.psi.len();
        let rho_t = ComplexMatrix::outer(&x.psi);
        let mut d_rho_t = ComplexMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                d_rho_t[(r, c)] = dx.psi[r] * x.psi[c].conj() + x.psi[r] * dx.psi[c].conj();
            }
        }
        let tr = rho_t.trace().re;
        let dtr = d_rho_t.trace().re;
        let rho_hat = rho_t.scale_real(1.0 / tr);
        let mut d = d_rho_t.scale_real(1.0 / tr);
        d.axpy(-dtr / (tr * tr), &rho_t);
        (rho_hat, d)
    }

    /// `(V, dV/dt, injection part of dV/dt, innovation)` at a recorded state.
    fn lyapunov(&self, x: &Coupled, dx: &Coupled, y_meas: &[f64]) -> (f64, f64, f64, f64) {
        let setup = self.setup;
        let gains = &setup.gains;
        if setup.mode == EstimatorMode::SecondAveraged {
            let gamma = gains.param_gains[0];
            let v = second_averaged_lyapunov(
                &x.rho_hat,
                x.theta[0],
                &self.zeta,
                self.theta_true[0],
                gamma,
            );
            let rate = second_averaged_lyapunov_rate(
                &x.rho_hat,
                x.theta[0],
                &self.zeta,
                self.theta_true[0],
                gains,
            )
            .unwrap_or(f64::NAN);
            let e = (&x.rho_hat - &self.zeta).frobenius_norm();
            return (v, rate, rate, e);
        }
        let (rho_hat, d_rho_hat) = self.estimator_view(x, dx);
        let y = populations(&x.rho);
        let dy = populations(&dx.rho);
        let y_hat = populations(&rho_hat);
        let dy_hat = populations(&d_rho_hat);
        let channels = &self.known.channels;
        let n = y.len();
        let e_true: Vec<f64> = (0..n).map(|j| y[j] - y_hat[j]).collect();

        let single = n == 2 && channels.len() == 1;
        let (mut v, mut rate) = (0.0, 0.0);
        if single {
            let j = channels[0];
            v += 0.5 * e_true[j].powi(2);
            rate += e_true[j] * (dy[j] - dy_hat[j]);
        } else {
            for j in 0..n {
                v += 0.5 * e_true[j].powi(2);
                rate += e_true[j] * (dy[j] - dy_hat[j]);
            }
        }
        let weight = if single { 0.5 } else { 2.0 };
        for (p, &g) in gains.param_gains.iter().enumerate() {
            let d = x.theta[p] - self.theta_true[p];
            v += weight * d * d / g;
            rate += 2.0 * weight * d * dx.theta[p] / g;
        }

        // -2Γ [Σ_{j∈S} e_j² ŷ_j - (Σ_{j∈S} e_j ŷ_j)(Σ_{n∈V} e_n ŷ_n)], V the
        // channels entering the Lyapunov function.
        let s_obs: f64 = channels
            .iter()
            .map(|&j| e_true[j] * e_true[j] * y_hat[j])
            .sum();
        let m_obs: f64 = channels.iter().map(|&j| e_true[j] * y_hat[j]).sum();
        let m_all: f64 = if single {
            m_obs
        } else {
            (0..n).map(|j| e_true[j] * y_hat[j]).sum()
        };
        let dissipation = -2.0 * gains.state_gain * (s_obs - m_obs * m_all);

        let innov: Vec<f64> = channels.iter().map(|&j| y_meas[j] - y_hat[j]).collect();
        let e = if innov.len() == 1 {
            innov[0]
        } else {
            innov.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        (v, rate, dissipation, e)
    }
}

fn retract(m: &mut ComplexMatrix) -> (f64, f64, f64) {
    let herm = m.hermitian_deviation();
    let trace = (m.trace().re - 1.0).abs();
    let pur = (purity(m) - 1.0).abs();
    *m = nearest_pure_state(m);
    (herm, trace, pur)
}

fn hermitize_normalize(m: &mut ComplexMatrix) -> (f64, f64, f64) {
    let herm = m.hermitian_deviation();
    let trace = (m.trace().re - 1.0).abs();
    let pur = (purity(m) - 1.0).abs();
    m.hermitize();
    let tr = m.trace().re;
    *m = m.scale_real(1.0 / tr);
    (herm, trace, pur)
}

/// Runs the plant and the estimator in lockstep over the configured
/// horizon.
pub fn integrate(setup: &Setup) -> Result<SimulationResult, SimulationError> {
    integrate_with_partial(setup).map_err(|f| f.error)
}

/// A failed run together with whatever was recorded before the failure.
#[derive(Clone, Debug)]
pub struct SimulationFailure {
    pub error: SimulationError,
    pub partial: Trajectory,
}

/// Like [`integrate`], but keeps the samples recorded before a failure.
pub fn integrate_with_partial(setup: &Setup) -> Result<SimulationResult, SimulationFailure> {
    let fail = |error: SimulationError| SimulationFailure {
        error,
        partial: Trajectory::default(),
    };
    run(setup).map_err(fail)?
}

fn run(setup: &Setup) -> Result<Result<SimulationResult, SimulationFailure>, SimulationError> {
    let n = setup.system.dim();
    let pairs = transitions(n).len();
    let cfg = &setup.integration;
    cfg.validate(setup.control.max_frequency())?;
    let h = cfg.step;
    let steps = cfg.steps();

    if setup.initial_state.len() != n || setup.initial_state_hat.len() != n {
        return Err(SimulationError::Setup(
            "initial state has the wrong dimension".into(),
        ));
    }
    if setup.initial_theta_hat.len() != pairs {
        return Err(SimulationError::Setup(format!(
            "expected {pairs} initial couplings, got {}",
            setup.initial_theta_hat.len()
        )));
    }
    if setup.measurement.channels.is_empty() || setup.measurement.channels.iter().any(|&j| j >= n) {
        return Err(SimulationError::Setup(
            "measurement channels must be a non-empty subset of the levels".into(),
        ));
    }
    setup.gains.validate(pairs)?;
    if setup.mode == EstimatorMode::SecondAveraged && n != 2 {
        return Err(EstimatorError::NotTwoLevel(n).into());
    }

    let mut warnings = Vec::new();
    if let Some(eps) = setup.regime_epsilon {
        for w in setup.gains.regime_warnings(
            &setup.initial_theta_hat,
            &setup.system.transition_frequencies(),
            eps,
        ) {
            warn!("{w}");
            warnings.push(w);
        }
    }

    let rho0 = ComplexMatrix::outer(&setup.initial_state);
    let rho_hat0 = ComplexMatrix::outer(&setup.initial_state_hat);
    let engine = Engine {
        setup,
        known: KnownModel {
            hamiltonian: setup.system.hamiltonian().clone(),
            channels: setup.measurement.channels.clone(),
        },
        zeta: rho0.clone(),
        theta_true: setup.system.theta().to_vec(),
    };

    let mut x = Coupled {
        rho: rho0.clone(),
        rho_hat: rho_hat0,
        psi: if setup.mode == EstimatorMode::Unnormalized {
            setup.initial_state_hat.clone()
        } else {
            Vec::new()
        },
        theta: setup.initial_theta_hat.clone(),
    };

    let m = &setup.measurement;
    let delay_steps = (m.delay / h).round() as usize;
    let sample_steps = ((m.sample_period / h).round() as usize).max(1);
    let continuous = delay_steps == 0 && sample_steps == 1;
    let mut history = OutputHistory::prefilled(delay_steps, &populations(&rho0));
    let mut meas_noise = NoiseStream::new(m.seed);
    let mut ctrl_noise = setup.control.noise_stream();
    let mut held_output: Option<Vec<f64>> = None;

    let mut traj = Trajectory {
        dim: n,
        ..Default::default()
    };
    let mut result_defects = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let stride = cfg.record_stride;
    let mut recorded = 0usize;

    let mut looped = || -> Result<(), SimulationError> {
        for step in 0..=steps {
            let t = step as f64 * h;
            let control_noise = if setup.control.noise_sigma > 0.0 {
                ctrl_noise.draw()
            } else {
                0.0
            };
            let draw_vec = |s: &mut NoiseStream| -> Vec<f64> {
                if m.noise_sigma > 0.0 {
                    (0..n).map(|_| s.draw()).collect()
                } else {
                    vec![0.0; n]
                }
            };
            let held = if continuous || setup.mode == EstimatorMode::SecondAveraged {
                HeldInputs {
                    control_noise,
                    measurement_noise: draw_vec(&mut meas_noise),
                    held_output: None,
                }
            } else {
                if step % sample_steps == 0 {
                    let noise = draw_vec(&mut meas_noise);
                    held_output = Some(measured_output(&history, m, h, &noise)?);
                }
                HeldInputs {
                    control_noise,
                    measurement_noise: Vec::new(),
                    held_output: held_output.clone(),
                }
            };

            if step % stride == 0 || step == steps {
                let (dx, y_meas) = engine.rhs(t, &x, &held)?;
                let (rho_hat, _) = engine.estimator_view(&x, &dx);
                let (v, rate, diss, e) = engine.lyapunov(&x, &dx, &y_meas);
                traj.times.push(t);
                traj.y.push(y_meas);
                traj.y_true.push(populations(&x.rho));
                traj.y_hat.push(populations(&rho_hat));
                traj.theta_hat.push(x.theta.clone());
                traj.lyapunov.push(v);
                traj.lyapunov_rate.push(rate);
                traj.dissipation.push(diss);
                traj.innovation.push(e);
                traj.purity_hat.push(purity(&rho_hat));
                traj.trace_drift.push((rho_hat.trace().re - 1.0).abs());
                if let Some(s) = setup.snapshot_stride {
                    if recorded % s.max(1) == 0 || step == steps {
                        traj.snapshots.push((t, x.rho.clone(), rho_hat));
                    }
                }
                recorded += 1;
            }
            if step == steps {
                break;
            }

            x = rk4_step(&x, t, h, |ts, xs: &Coupled| {
                engine.rhs(ts, xs, &held).map(|(d, _)| d)
            })?;

            let post = if cfg.renormalize {
                retract
            } else {
                hermitize_normalize
            };
            if setup.mode != EstimatorMode::SecondAveraged {
                let (hd, _, pd) = post(&mut x.rho);
                result_defects.0 = result_defects.0.max(pd);
                result_defects.3 = result_defects.3.max(hd);
            }
            if setup.mode != EstimatorMode::Unnormalized {
                let (hd, td, pd) = post(&mut x.rho_hat);
                result_defects.1 = result_defects.1.max(pd);
                result_defects.2 = result_defects.2.max(td);
                result_defects.3 = result_defects.3.max(hd);
            }
            history.push(populations(&x.rho));
        }
        Ok(())
    };
    if let Err(error) = looped() {
        return Ok(Err(SimulationFailure {
            error,
            partial: traj,
        }));
    }

    let final_rho_hat = if setup.mode == EstimatorMode::Unnormalized {
        let r = ComplexMatrix::outer(&x.psi);
        let tr = r.trace().re;
        r.scale_real(1.0 / tr)
    } else {
        x.rho_hat.clone()
    };
    Ok(Ok(SimulationResult {
        trajectory: traj,
        final_rho: x.rho,
        final_rho_hat,
        final_theta_hat: x.theta,
        max_plant_purity_defect: result_defects.0,
        max_estimator_purity_defect: result_defects.1,
        max_trace_defect: result_defects.2,
        max_hermitian_defect: result_defects.3,
        steps,
        warnings,
    }))
}

/// Averaging period `2π / (A θ)` for the first transition (two-level
/// Rabi period), if the drive is nonzero.
pub fn rabi_period(gains: &GainConfig, theta: &[f64]) -> Option<f64> {
    let a = gains.amplitudes.first()? * theta.first()?;
    (a.abs() > 0.0).then(|| 2.0 * PI / a.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Tone, Waveform};

    fn two_level_setup(mode: EstimatorMode, horizon: f64) -> Setup {
        let s2 = 1.0 / 2f64.sqrt();
        let s5 = 1.0 / 5f64.sqrt();
        let system = QuantumSystem::new(vec![0.5, -0.5], vec![1.0]).unwrap();
        let control = ControlField::noiseless(vec![Tone {
            amplitude: 1.0,
            frequency: 1.0,
            waveform: Waveform::Sin,
        }]);
        let map = drive_map(&system, &control);
        let h = 2.0 * PI / 100.0;
        let mut measurement = MeasurementModel::ideal(2, h);
        measurement.channels = vec![0];
        Setup {
            system,
            initial_state: vec![C64::new(s2, 0.0), C64::new(s2, 0.0)],
            control,
            measurement,
            mode,
            gains: GainConfig {
                state_gain: 1.0,
                param_gains: vec![0.1],
                amplitudes: map.amplitudes,
                detuning: vec![0.0],
                drive_angle: map.angles,
            },
            initial_theta_hat: vec![1.5],
            initial_state_hat: vec![C64::new(s5, 0.0), C64::new(2.0 * s5, 0.0)],
            integration: IntegrationConfig::new(h, horizon),
            snapshot_stride: None,
            regime_epsilon: None,
        }
    }

    #[test]
    fn drive_map_matches_resonant_tones() {
        let sys = QuantumSystem::new(vec![0.0, 1.0, 3.0], vec![1.3, 1.0, -1.5]).unwrap();
        let tones = (1..=3)
            .map(|k| Tone {
                amplitude: 0.1,
                frequency: k as f64,
                waveform: Waveform::Sin,
            })
            .collect();
        let map = drive_map(&sys, &ControlField::noiseless(tones));
        // ω_12 = -1, ω_13 = -3, ω_23 = -2
        assert_eq!(map.tone_index, vec![Some(0), Some(2), Some(1)]);
        assert!(map.detunings.iter().all(|d| d.abs() < 1e-15));
        assert!(map.angles.iter().all(|a| (a + PI / 2.0).abs() < 1e-15));
    }

    #[test]
    fn identical_flows_without_gains_track_the_plant() {
        let mut s = two_level_setup(EstimatorMode::Full, 10.0);
        s.initial_state_hat = s.initial_state.clone();
        s.initial_theta_hat = vec![1.0];
        s.gains.state_gain = 1e-300;
        s.gains.param_gains = vec![1e-300];
        let r = integrate(&s).unwrap();
        assert!((&r.final_rho - &r.final_rho_hat).max_abs() < 1e-12);
        assert!(r.trajectory.is_consistent());
    }

    #[test]
    fn zero_control_keeps_populations() {
        let mut s = two_level_setup(EstimatorMode::Full, 20.0);
        s.control.tones[0].amplitude = 0.0;
        let r = integrate(&s).unwrap();
        for y in &r.trajectory.y_true {
            assert!((y[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn delayed_measurement_warms_up_from_initial_output() {
        let mut s = two_level_setup(EstimatorMode::Full, 5.0);
        s.integration = IntegrationConfig::new(0.05, 5.0);
        s.measurement.delay = 0.3;
        s.measurement.sample_period = 0.05;
        let r = integrate(&s).unwrap();
        let y0 = r.trajectory.y_true[0][0];
        for k in 0..=6 {
            assert_eq!(r.trajectory.y[k][0], y0);
        }
        assert!((r.trajectory.y[10][0] - r.trajectory.y_true[4][0]).abs() < 1e-15);
    }

    #[test]
    fn blowup_is_reported() {
        let mut s = two_level_setup(EstimatorMode::Full, 5.0);
        s.gains.param_gains = vec![1e308];
        s.gains.state_gain = 1e308;
        let r = integrate(&s);
        assert!(
            matches!(r, Err(SimulationError::Ode(OdeError::Blowup { .. }))),
            "{r:?}"
        );
        let f = integrate_with_partial(&s).unwrap_err();
        assert!(matches!(
            f.error,
            SimulationError::Ode(OdeError::Blowup { .. })
        ));
        assert!(!f.partial.is_empty());
        assert!(f.partial.is_consistent());
    }

    #[test]
    fn every_mode_runs() {
        for mode in [
            EstimatorMode::Full,
            EstimatorMode::Averaged,
            EstimatorMode::Unnormalized,
            EstimatorMode::SecondAveraged,
        ] {
            let r = integrate(&two_level_setup(mode, 5.0)).unwrap();
            assert!(r.trajectory.is_consistent());
            assert!(r
                .trajectory
                .purity_hat
                .iter()
                .all(|p| (p - 1.0).abs() < 1e-10));
        }
    }
}

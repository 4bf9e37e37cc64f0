//! Fixed-step classical Runge–Kutta integration and trajectory storage.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::ComplexMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("blowup: non-finite state at t = {t}")]
    Blowup { t: f64 },
    #[error("integration step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("record_stride must be at least 1")]
    BadStride,
    #[error("step {step} does not resolve the fastest tone (frequency {frequency}); need step <= {limit}")]
    StepTooCoarse {
        step: f64,
        frequency: f64,
        limit: f64,
    },
}

/// A vector-space state the integrator can combine linearly.
pub trait OdeState: Clone {
    /// `self += a * other`
    fn axpy(&mut self, a: f64, other: &Self);
    fn is_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn axpy(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl OdeState for Vec<f64> {
    fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.iter_mut().zip(other) {
            *x += a * y;
        }
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl OdeState for ComplexMatrix {
    fn axpy(&mut self, a: f64, other: &Self) {
        ComplexMatrix::axpy(self, a, other);
    }
    fn is_finite(&self) -> bool {
        ComplexMatrix::is_finite(self)
    }
}

/// One classical RK4 step. `rhs(t, x)` returns the derivative; any
/// non-finite stage or result is reported as [`OdeError::Blowup`].
pub fn rk4_step<S, E, F>(state: &S, t: f64, h: f64, mut rhs: F) -> Result<S, E>
where
    S: OdeState,
    E: From<OdeError>,
    F: FnMut(f64, &S) -> Result<S, E>,
{
    let stage = |k: &S| -> Result<(), E> {
        if k.is_finite() {
            Ok(())
        } else {
            Err(OdeError::Blowup { t }.into())
        }
    };
    let k1 = rhs(t, state)?;
    stage(&k1)?;
    let mut x = state.clone();
    x.axpy(0.5 * h, &k1);
    let k2 = rhs(t + 0.5 * h, &x)?;
    stage(&k2)?;
    let mut x = state.clone();
    x.axpy(0.5 * h, &k2);
    let k3 = rhs(t + 0.5 * h, &x)?;
    stage(&k3)?;
    let mut x = state.clone();
    x.axpy(h, &k3);
    let k4 = rhs(t + h, &x)?;
    stage(&k4)?;

    let mut out = state.clone();
    out.axpy(h / 6.0, &k1);
    out.axpy(h / 3.0, &k2);
    out.axpy(h / 3.0, &k3);
    out.axpy(h / 6.0, &k4);
    if !out.is_finite() {
        return Err(OdeError::Blowup { t: t + h }.into());
    }
    Ok(out)
}

/// Most recorded samples kept per channel when the stride is left to the
/// default.
pub const MAX_DEFAULT_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub step: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub renormalize: bool,
}

impl IntegrationConfig {
    /// Config with the stride chosen to keep at most
    /// [`MAX_DEFAULT_SAMPLES`] samples.
    pub fn new(step: f64, horizon: f64) -> Self {
        let steps = (horizon / step).round().max(1.0) as usize;
        let record_stride = steps.div_ceil(MAX_DEFAULT_SAMPLES).max(1);
        Self {
            step,
            horizon,
            record_stride,
            renormalize: true,
        }
    }

    /// Number of steps; the horizon is rounded to the nearest multiple of
    /// the step.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round().max(1.0) as usize
    }

    /// `h <= (2π/ω_max)/50` for the fastest tone frequency `ω_max`.
    pub fn validate(&self, max_tone_frequency: f64) -> Result<(), OdeError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(OdeError::BadStep(self.step));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(OdeError::BadHorizon(self.horizon));
        }
        if self.record_stride == 0 {
            return Err(OdeError::BadStride);
        }
        if max_tone_frequency > 0.0 {
            let limit = 2.0 * PI / max_tone_frequency / 50.0;
            if self.step > limit * (1.0 + 1e-12) {
                return Err(OdeError::StepTooCoarse {
                    step: self.step,
                    frequency: max_tone_frequency,
                    limit,
                });
            }
        }
        Ok(())
    }
}

/// `2π / (100 · max(fastest tone, fastest Rabi gap))`.
pub fn default_step(max_tone_frequency: f64, max_rabi_gap: f64) -> f64 {
    let scale = max_tone_frequency.max(max_rabi_gap);
    if scale > 0.0 {
        2.0 * PI / (100.0 * scale)
    } else {
        0.01
    }
}

/// Sampled run record. Every channel has one entry per recorded time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Measured output fed to the estimator.
    pub y: Vec<Vec<f64>>,
    /// True (noise-free) populations of the plant.
    pub y_true: Vec<Vec<f64>>,
    pub y_hat: Vec<Vec<f64>>,
    pub theta_hat: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    /// Innovation: signed for a single observed channel, Euclidean norm
    /// over the observed channels otherwise.
    pub innovation: Vec<f64>,
    pub purity_hat: Vec<f64>,
    pub trace_drift: Vec<f64>,
    /// Analytic `dV/dt` at the recorded state.
    pub lyapunov_rate: Vec<f64>,
    /// The state-injection part of `dV/dt` (non-positive by construction).
    pub dissipation: Vec<f64>,
    /// Optional `(t, ρ, ρ̂)` snapshots.
    pub snapshots: Vec<(f64, ComplexMatrix, ComplexMatrix)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_theta_hat(&self) -> Option<&[f64]> {
        self.theta_hat.last().map(|v| v.as_slice())
    }

    /// Column `p` of the parameter estimates.
    pub fn theta_channel(&self, p: usize) -> Vec<f64> {
        self.theta_hat.iter().map(|v| v[p]).collect()
    }

    /// Checks the shape contract: strictly increasing times and equal
    /// lengths for every channel.
    pub fn is_consistent(&self) -> bool {
        let n = self.times.len();
        self.times.windows(2).all(|w| w[1] > w[0])
            && [
                self.y.len(),
                self.y_true.len(),
                self.y_hat.len(),
                self.theta_hat.len(),
                self.lyapunov.len(),
                self.innovation.len(),
                self.purity_hat.len(),
                self.trace_drift.len(),
                self.lyapunov_rate.len(),
                self.dissipation.len(),
            ]
            .iter()
            .all(|&l| l == n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        let x = vec![1.0, -2.0, 3.5];
        let y = rk4_step(&x, 0.0, 0.1, |_, s: &Vec<f64>| {
            Ok::<_, OdeError>(vec![0.0; s.len()])
        })
        .unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn exponential_decay_step() {
        let y = rk4_step(&1.0, 0.0, 0.1, |_, x: &f64| Ok::<_, OdeError>(-x)).unwrap();
        // 1 - h + h²/2 - h³/6 + h⁴/24
        assert!((y - 0.9048375).abs() < 1e-7);
        assert!((y - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn fourth_order_on_linear_oscillator() {
        let run = |h: f64| {
            let mut x = vec![1.0, 0.0];
            let n = (1.0 / h).round() as usize;
            for i in 0..n {
                x = rk4_step(&x, i as f64 * h, h, |_, s: &Vec<f64>| {
                    Ok::<_, OdeError>(vec![s[1], -s[0]])
                })
                .unwrap();
            }
            ((x[0] - 1f64.cos()).powi(2) + (x[1] + 1f64.sin()).powi(2)).sqrt()
        };
        let order = (run(0.1) / run(0.05)).log2();
        assert!((order - 4.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn blowup_is_reported() {
        let r = rk4_step(&1.0, 2.0, 0.1, |_, _: &f64| Ok::<_, OdeError>(f64::NAN));
        assert_eq!(r, Err(OdeError::Blowup { t: 2.0 }));
    }

    #[test]
    fn config_validation() {
        let cfg = IntegrationConfig::new(2.0 * PI / 100.0, 50.0 * PI);
        assert!(cfg.validate(1.0).is_ok());
        assert_eq!(cfg.steps(), 2500);
        assert_eq!(cfg.record_stride, 1);
        assert!(matches!(
            cfg.validate(3.0),
            Err(OdeError::StepTooCoarse { .. })
        ));
        let mut bad = cfg.clone();
        bad.record_stride = 0;
        assert_eq!(bad.validate(1.0), Err(OdeError::BadStride));
        assert!(IntegrationConfig::new(-1.0, 1.0).validate(0.0).is_err());
        let long = IntegrationConfig::new(0.001, 1e3);
        assert!(long.steps() / long.record_stride <= MAX_DEFAULT_SAMPLES);
    }

    #[test]
    fn default_step_uses_fastest_scale() {
        assert!((default_step(1.0, 0.5) - 2.0 * PI / 100.0).abs() < 1e-15);
        assert!((default_step(0.1, 2.0) - 2.0 * PI / 200.0).abs() < 1e-15);
    }
}

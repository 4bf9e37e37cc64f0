//! Observer-based dipole estimators.
//!
//! Four right-hand sides are provided:
//!
//! - [`full_estimator_rhs`]: the normalized observer with the gradient
//!   parameter law, driven by the laboratory-frame control `u(t)`.
//! - [`averaged_estimator_rhs`]: its rotating-wave (first averaged) version,
//!   which lives in the interaction frame and needs neither `u(t)` nor the
//!   Bohr frequencies.
//! - [`second_averaged_rhs`]: the two-level doubly averaged system. It needs
//!   the true `θ` and exists only to check the convergence argument.
//! - [`unnormalized_observer_rhs`]: the linear wavefunction observer whose
//!   norm drifts.
//!
//! Every estimator reads the plant only through the measured population
//! vector `y`; the observed subset of populations is given by `channels`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::DensityMatrix;
use crate::dynamics::{dipole_from_couplings, liouville_rhs, transitions};
use crate::linalg::{ComplexMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("the second averaged system is defined for two levels only (got {0})")]
    NotTwoLevel(usize),
    #[error("gain {name} must be strictly positive, got {value}")]
    NonPositiveGain { name: String, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    #[default]
    Full,
    Averaged,
    SecondAveraged,
    Unnormalized,
}

/// Estimator gains plus the drive description the averaged modes need.
///
/// `drive_angle[p]` rotates the transition's coupling axis in the
/// interaction frame: a tone `A cos(νt - φ)` resonant with a transition of
/// sign `s = sign(ω_lk)` couples through `cos(sφ) σ_x^{lk} - sin(sφ) σ_y^{lk}`,
/// so `drive_angle = sφ` (zero for cosine tones).
#[derive(Clone, Debug, PartialEq)]
pub struct GainConfig {
    /// Γ
    pub state_gain: f64,
    /// γ_lk
    pub param_gains: Vec<f64>,
    /// A_lk
    pub amplitudes: Vec<f64>,
    /// δ_lk (interaction-frame detuning drift, averaged mode only)
    pub detuning: Vec<f64>,
    pub drive_angle: Vec<f64>,
}

impl GainConfig {
    /// Gains for `pairs` transitions with resonant cosine drive and no
    /// detuning.
    pub fn uniform(state_gain: f64, param_gain: f64, amplitude: f64, pairs: usize) -> Self {
        Self {
            state_gain,
            param_gains: vec![param_gain; pairs],
            amplitudes: vec![amplitude; pairs],
            detuning: vec![0.0; pairs],
            drive_angle: vec![0.0; pairs],
        }
    }

    pub fn validate(&self, pairs: usize) -> Result<(), EstimatorError> {
        if !(self.state_gain > 0.0) {
            return Err(EstimatorError::NonPositiveGain {
                name: "Gamma".into(),
                value: self.state_gain,
            });
        }
        for (what, v) in [
            ("param_gains", &self.param_gains),
            ("amplitudes", &self.amplitudes),
            ("detuning", &self.detuning),
            ("drive_angle", &self.drive_angle),
        ] {
            if v.len() != pairs {
                return Err(EstimatorError::DimensionMismatch {
                    what,
                    got: v.len(),
                    expected: pairs,
                });
            }
        }
        for (p, &g) in self.param_gains.iter().enumerate() {
            if !(g > 0.0) {
                return Err(EstimatorError::NonPositiveGain {
                    name: format!("gamma[{p}]"),
                    value: g,
                });
            }
        }
        Ok(())
    }

    /// Warnings for gains outside the averaging regime
    /// `Γ ≤ εAθ`, `Aθ ≤ εω`, `γ ≤ εθ` (checked per transition).
    pub fn regime_warnings(
        &self,
        theta: &[f64],
        transition_freqs: &[f64],
        epsilon: f64,
    ) -> Vec<String> {
        let mut out = Vec::new();
        for (p, &th) in theta.iter().enumerate() {
            let a_theta = (self.amplitudes.get(p).copied().unwrap_or(0.0) * th).abs();
            if a_theta == 0.0 {
                continue;
            }
            if self.state_gain > epsilon * a_theta {
                out.push(format!(
                    "transition {p}: Gamma={} exceeds eps*A*theta={}",
                    self.state_gain,
                    epsilon * a_theta
                ));
            }
            if let Some(&w) = transition_freqs.get(p) {
                if a_theta > epsilon * w.abs() {
                    out.push(format!(
                        "transition {p}: A*theta={a_theta} exceeds eps*omega={}",
                        epsilon * w.abs()
                    ));
                }
            }
            if self.param_gains[p] > epsilon * th.abs() {
                out.push(format!(
                    "transition {p}: gamma={} exceeds eps*theta={}",
                    self.param_gains[p],
                    epsilon * th.abs()
                ));
            }
        }
        out
    }
}

/// State of one estimator run.
#[derive(Clone, Debug)]
pub struct EstimatorState {
    /// ρ̂ (full mode), ξ̂ (averaged), or ζ̂ (second averaged). For the
    /// unnormalized mode this is the normalized `Ψ̃Ψ̃†/‖Ψ̃‖²`.
    pub rho_hat: DensityMatrix,
    pub theta_hat: Vec<f64>,
    pub mode: EstimatorMode,
    pub psi_tilde: Option<Vec<C64>>,
}

/// What the estimator knows about the plant.
#[derive(Clone, Debug)]
pub struct KnownModel {
    pub hamiltonian: ComplexMatrix,
    /// Observed population indices (0-based).
    pub channels: Vec<usize>,
}

impl KnownModel {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), EstimatorError> {
    if got != expected {
        return Err(EstimatorError::DimensionMismatch {
            what,
            got,
            expected,
        });
    }
    Ok(())
}

/// Adds `Γ Σ_j e_j (P_j ρ + ρ P_j - 2 tr(P_j ρ) ρ)` into `out`.
fn add_injection(
    out: &mut ComplexMatrix,
    rho: &ComplexMatrix,
    innovations: &[(usize, f64)],
    gain: f64,
) {
    let n = rho.dim();
    for &(j, e) in innovations {
        if e == 0.0 {
            continue;
        }
        let g = gain * e;
        let yj = rho[(j, j)].re;
        for c in 0..n {
            // P_j ρ: row j of ρ
            out[(j, c)] += rho[(j, c)] * g;
        }
        for r in 0..n {
            // ρ P_j: column j of ρ
            out[(r, j)] += rho[(r, j)] * g;
        }
        out.axpy(-2.0 * g * yj, rho);
    }
}

/// `(j, y_j - tr(P_j ρ))` for each observed channel.
fn innovations(y: &[f64], rho: &ComplexMatrix, channels: &[usize]) -> Vec<(usize, f64)> {
    channels
        .iter()
        .map(|&j| (j, y[j] - rho[(j, j)].re))
        .collect()
}

/// `tr(σ_y^{lk} ρ) = 2 Im ρ_kl` (0-based `l < k`).
#[inline]
fn trace_sigma_y(rho: &ComplexMatrix, l: usize, k: usize) -> f64 {
    2.0 * rho[(k, l)].im
}

/// `tr(σ_x^{lk} ρ) = 2 Re ρ_lk`.
#[inline]
fn trace_sigma_x(rho: &ComplexMatrix, l: usize, k: usize) -> f64 {
    2.0 * rho[(l, k)].re
}

/// `tr(P_j [σ_x^{lk}, ρ])`, evaluated from matrix elements.
#[inline]
fn projected_commutator_trace(rho: &ComplexMatrix, j: usize, l: usize, k: usize) -> C64 {
    if j == l {
        rho[(k, l)] - rho[(l, k)]
    } else if j == k {
        rho[(l, k)] - rho[(k, l)]
    } else {
        C64::new(0.0, 0.0)
    }
}

fn check_finite(
    y: &[f64],
    u: f64,
    rho: &ComplexMatrix,
    theta: &[f64],
) -> Result<(), EstimatorError> {
    if !y.iter().all(|v| v.is_finite()) {
        return Err(EstimatorError::NonFinite("y"));
    }
    if !u.is_finite() {
        return Err(EstimatorError::NonFinite("u"));
    }
    if !rho.is_finite() {
        return Err(EstimatorError::NonFinite("rho_hat"));
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(EstimatorError::NonFinite("theta_hat"));
    }
    Ok(())
}

/// Full observer-based estimator:
///
/// ```text
/// dρ̂/dt  = -i[H + u μ̂, ρ̂] + Γ Σ_j e_j (P_j ρ̂ + ρ̂ P_j - 2 tr(P_j ρ̂) ρ̂)
/// dθ̂_lk/dt = -i γ_lk u Σ_j tr(P_j [σ_x^{lk}, ρ̂]) e_j
/// ```
///
/// with `e_j = y_j - tr(P_j ρ̂)` summed over the observed channels.
pub fn full_estimator_rhs(
    rho_hat: &ComplexMatrix,
    theta_hat: &[f64],
    y: &[f64],
    u: f64,
    known: &KnownModel,
    gains: &GainConfig,
) -> Result<(ComplexMatrix, Vec<f64>), EstimatorError> {
    let n = known.dim();
    let pairs = transitions(n);
    check_len("rho_hat", rho_hat.dim(), n)?;
    check_len("theta_hat", theta_hat.len(), pairs.len())?;
    check_len("y", y.len(), n)?;
    check_len("param_gains", gains.param_gains.len(), pairs.len())?;
    check_finite(y, u, rho_hat, theta_hat)?;

    let mu_hat = dipole_from_couplings(n, theta_hat);
    let mut d_rho = liouville_rhs(rho_hat, &known.hamiltonian, &mu_hat, u);
    let innov = innovations(y, rho_hat, &known.channels);
    add_injection(&mut d_rho, rho_hat, &innov, gains.state_gain);

    let d_theta = pairs
        .iter()
        .zip(&gains.param_gains)
        .map(|(&(l, k), &gamma)| {
            let s: C64 = innov
                .iter()
                .map(|&(j, e)| projected_commutator_trace(rho_hat, j, l, k) * e)
                .sum();
            (C64::new(0.0, -gamma * u) * s).re
        })
        .collect();
    Ok((d_rho, d_theta))
}

/// Interaction-frame coupling axes for one transition.
fn drive_axes(n: usize, l: usize, k: usize, angle: f64) -> (ComplexMatrix, ComplexMatrix) {
    let (c, s) = (angle.cos(), angle.sin());
    // σ'_x = cos α σ_x - sin α σ_y ;  σ'_y = cos α σ_y + sin α σ_x
    let mut x = ComplexMatrix::zeros(n);
    let mut y = ComplexMatrix::zeros(n);
    let sx_lk = C64::new(1.0, 0.0);
    let sy_lk = C64::new(0.0, -1.0);
    x[(l, k)] = sx_lk * c - sy_lk * s;
    x[(k, l)] = x[(l, k)].conj();
    y[(l, k)] = sy_lk * c + sx_lk * s;
    y[(k, l)] = y[(l, k)].conj();
    (x, y)
}

/// First averaged (rotating-wave) estimator in the interaction frame:
///
/// ```text
/// dξ̂/dt = -i Σ (A_lk θ̂_lk / 2)[σ'_x^{lk}, ξ̂] - i Σ (δ_lk / 2)[σ_z^{lk}, ξ̂]
///         + Γ Σ_j e_j (P_j ξ̂ + ξ̂ P_j - 2 tr(P_j ξ̂) ξ̂)
/// dθ̂_lk/dt = (γ_lk A_lk / 2) tr(σ'_y^{lk} ξ̂) (e_l - e_k)
/// ```
///
/// where `e_j` is zero for unobserved channels. With every channel observed
/// the parameter factor is `y_l - y_k - tr(σ_z^{lk} ξ̂)`.
pub fn averaged_estimator_rhs(
    xi_hat: &ComplexMatrix,
    theta_hat: &[f64],
    y: &[f64],
    channels: &[usize],
    gains: &GainConfig,
) -> Result<(ComplexMatrix, Vec<f64>), EstimatorError> {
    let n = xi_hat.dim();
    let pairs = transitions(n);
    check_len("theta_hat", theta_hat.len(), pairs.len())?;
    check_len("y", y.len(), n)?;
    gains.validate(pairs.len())?;
    check_finite(y, 0.0, xi_hat, theta_hat)?;

    let mut generator = ComplexMatrix::zeros(n);
    let mut axes_y = Vec::with_capacity(pairs.len());
    for (p, &(l, k)) in pairs.iter().enumerate() {
        let (ax, ay) = drive_axes(n, l, k, gains.drive_angle[p]);
        generator.axpy(gains.amplitudes[p] * theta_hat[p] / 2.0, &ax);
        let half_delta = gains.detuning[p] / 2.0;
        generator[(l, l)] += half_delta;
        generator[(k, k)] -= half_delta;
        axes_y.push(ay);
    }
    let zero = ComplexMatrix::zeros(n);
    let mut d_xi = liouville_rhs(xi_hat, &generator, &zero, 0.0);
    let innov = innovations(y, xi_hat, channels);
    add_injection(&mut d_xi, xi_hat, &innov, gains.state_gain);

    let mut e_full = vec![0.0; n];
    for &(j, e) in &innov {
        e_full[j] = e;
    }
    let d_theta = pairs
        .iter()
        .enumerate()
        .map(|(p, &(l, k))| {
            let ty = xi_hat.trace_product(&axes_y[p]).re;
            gains.param_gains[p] * gains.amplitudes[p] / 2.0 * ty * (e_full[l] - e_full[k])
        })
        .collect();
    Ok((d_xi, d_theta))
}

fn pauli_traces(rho: &ComplexMatrix) -> (f64, f64) {
    (trace_sigma_y(rho, 0, 1), (rho[(0, 0)] - rho[(1, 1)]).re)
}

/// `σ_a ρ + ρ σ_a - 2 tr(σ_a ρ) ρ` for a Pauli matrix `sigma`.
fn projective_term(sigma: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    let tr = rho.trace_product(sigma).re;
    let mut out = sigma.matmul(rho);
    out += &rho.matmul(sigma);
    out.axpy(-2.0 * tr, rho);
    out
}

/// Second averaged two-level system (ζ is constant):
///
/// ```text
/// dζ̂/dt = -i (A(θ̂-θ)/2)[σ_x, ζ̂]
///         + (Γ/8) tr(σ_y(ζ-ζ̂)) (σ_y ζ̂ + ζ̂ σ_y - 2 tr(σ_y ζ̂) ζ̂)
///         + (Γ/8) tr(σ_z(ζ-ζ̂)) (σ_z ζ̂ + ζ̂ σ_z - 2 tr(σ_z ζ̂) ζ̂)
/// dθ̂/dt = (γA/8)(tr(σ_y ζ̂) tr(σ_z(ζ-ζ̂)) - tr(σ_z ζ̂) tr(σ_y(ζ-ζ̂)))
/// ```
pub fn second_averaged_rhs(
    zeta_hat: &ComplexMatrix,
    theta_hat: f64,
    zeta: &ComplexMatrix,
    theta: f64,
    gains: &GainConfig,
) -> Result<(ComplexMatrix, f64), EstimatorError> {
    if zeta_hat.dim() != 2 {
        return Err(EstimatorError::NotTwoLevel(zeta_hat.dim()));
    }
    if zeta.dim() != 2 {
        return Err(EstimatorError::NotTwoLevel(zeta.dim()));
    }
    let amplitude = gains.amplitudes.first().copied().unwrap_or(0.0);
    let gamma = gains.param_gains.first().copied().unwrap_or(0.0);
    let big_gamma = gains.state_gain;

    let sx = crate::linalg::pauli(crate::linalg::PauliAxis::X).into_matrix();
    let sy = crate::linalg::pauli(crate::linalg::PauliAxis::Y).into_matrix();
    let sz = crate::linalg::pauli(crate::linalg::PauliAxis::Z).into_matrix();

    let (y_hat, z_hat) = pauli_traces(zeta_hat);
    let (y_true, z_true) = pauli_traces(zeta);
    let dy = y_true - y_hat;
    let dz = z_true - z_hat;

    let zero = ComplexMatrix::zeros(2);
    let mut d = liouville_rhs(
        zeta_hat,
        &sx.scale_real(amplitude * (theta_hat - theta) / 2.0),
        &zero,
        0.0,
    );
    d.axpy(big_gamma / 8.0 * dy, &projective_term(&sy, zeta_hat));
    d.axpy(big_gamma / 8.0 * dz, &projective_term(&sz, zeta_hat));
    let d_theta = gamma * amplitude / 8.0 * (y_hat * dz - z_hat * dy);
    Ok((d, d_theta))
}

/// `V = ½ tr(σ_y(ζ̂-ζ))² + ½ tr(σ_z(ζ̂-ζ))² + (4/γ)(θ̂-θ)²`.
pub fn second_averaged_lyapunov(
    zeta_hat: &ComplexMatrix,
    theta_hat: f64,
    zeta: &ComplexMatrix,
    theta: f64,
    gamma: f64,
) -> f64 {
    let (yh, zh) = pauli_traces(zeta_hat);
    let (y, z) = pauli_traces(zeta);
    0.5 * (yh - y).powi(2) + 0.5 * (zh - z).powi(2) + 4.0 / gamma * (theta_hat - theta).powi(2)
}

/// Time derivative of [`second_averaged_lyapunov`] along
/// [`second_averaged_rhs`], by the chain rule.
pub fn second_averaged_lyapunov_rate(
    zeta_hat: &ComplexMatrix,
    theta_hat: f64,
    zeta: &ComplexMatrix,
    theta: f64,
    gains: &GainConfig,
) -> Result<f64, EstimatorError> {
    let (d, d_theta) = second_averaged_rhs(zeta_hat, theta_hat, zeta, theta, gains)?;
    let (yh, zh) = pauli_traces(zeta_hat);
    let (y, z) = pauli_traces(zeta);
    let (dyh, dzh) = pauli_traces(&d);
    let gamma = gains.param_gains[0];
    Ok((yh - y) * dyh + (zh - z) * dzh + 8.0 / gamma * (theta_hat - theta) * d_theta)
}

/// Un-normalized wavefunction observer
/// `dΨ̃/dt = -i(H + u Σθ_lk σ_x^{lk})Ψ̃ + Γ Σ_j (y_j - ỹ_j) P_j Ψ̃`
/// with `ỹ_j = |Ψ̃_j|²` (the norm of `Ψ̃` is not conserved).
pub fn unnormalized_observer_rhs(
    psi_tilde: &[C64],
    y: &[f64],
    u: f64,
    known: &KnownModel,
    theta: &[f64],
    state_gain: f64,
) -> Result<Vec<C64>, EstimatorError> {
    let n = known.dim();
    check_len("psi_tilde", psi_tilde.len(), n)?;
    check_len("y", y.len(), n)?;
    check_len("theta", theta.len(), n * (n - 1) / 2)?;
    let mut k = known.hamiltonian.clone();
    k.axpy(u, &dipole_from_couplings(n, theta));
    let mut out: Vec<C64> = k
        .matvec(psi_tilde)
        .into_iter()
        .map(|z| z * C64::new(0.0, -1.0))
        .collect();
    for &j in &known.channels {
        let y_tilde = psi_tilde[j].norm_sqr();
        out[j] += psi_tilde[j] * (state_gain * (y[j] - y_tilde));
    }
    Ok(out)
}

/// Parameter law paired with the un-normalized observer: the full-mode law
/// evaluated on `ρ̃ = Ψ̃Ψ̃†` with innovations `y_j - |Ψ̃_j|²`.
pub fn unnormalized_parameter_rhs(
    psi_tilde: &[C64],
    y: &[f64],
    u: f64,
    channels: &[usize],
    param_gains: &[f64],
) -> Vec<f64> {
    let n = psi_tilde.len();
    let rho = ComplexMatrix::outer(psi_tilde);
    let innov = innovations(y, &rho, channels);
    transitions(n)
        .iter()
        .zip(param_gains)
        .map(|(&(l, k), &gamma)| {
            let s: C64 = innov
                .iter()
                .map(|&(j, e)| projected_commutator_trace(&rho, j, l, k) * e)
                .sum();
            (C64::new(0.0, -gamma * u) * s).re
        })
        .collect()
}

/// `ξ = e^{iHt} ρ e^{-iHt}` for diagonal `H = diag(ω)`.
pub fn to_interaction_frame(rho: &ComplexMatrix, omega: &[f64], t: f64) -> ComplexMatrix {
    rotate_by_levels(rho, omega, t)
}

/// Inverse of [`to_interaction_frame`].
pub fn from_interaction_frame(xi: &ComplexMatrix, omega: &[f64], t: f64) -> ComplexMatrix {
    rotate_by_levels(xi, omega, -t)
}

fn rotate_by_levels(rho: &ComplexMatrix, omega: &[f64], t: f64) -> ComplexMatrix {
    let n = rho.dim();
    let mut out = rho.clone();
    for r in 0..n {
        for c in 0..n {
            if r != c {
                out[(r, c)] = rho[(r, c)] * C64::from_polar(1.0, (omega[r] - omega[c]) * t);
            }
        }
    }
    out
}

/// Exposes `tr(σ_x^{lk} ρ)` and `tr(σ_y^{lk} ρ)` for diagnostics.
pub fn transition_bloch(rho: &ComplexMatrix, l: usize, k: usize) -> (f64, f64, f64) {
    (
        trace_sigma_x(rho, l, k),
        trace_sigma_y(rho, l, k),
        (rho[(l, l)] - rho[(k, k)]).re,
    )
}

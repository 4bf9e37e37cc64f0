//! The simulated plant: a closed N-level system driven by a multi-tone laser
//! field, its population outputs, and the laboratory imperfection models
//! (measurement delay, bias, additive noise on both channels).

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermitian_eigendecompose, ComplexMatrix, HermitianOperator, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: state has dimension {state}, system has {system}")]
    DimensionMismatch { state: usize, system: usize },
    #[error("expected {expected} dipole couplings for {dim} levels, got {got}")]
    WrongCouplingCount {
        dim: usize,
        expected: usize,
        got: usize,
    },
    #[error("dipole operator must be real symmetric with zero diagonal: {0}")]
    BadDipole(String),
    #[error("basis change is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("insufficient-history: need {needed} past samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Upper-triangle transition pairs `(l, k)`, `l < k`, 0-based, in row-major
/// order: (0,1), (0,2), ..., (1,2), ...
pub fn transitions(dim: usize) -> Vec<(usize, usize)> {
    (0..dim)
        .flat_map(|l| ((l + 1)..dim).map(move |k| (l, k)))
        .collect()
}

/// Number of levels for a given number of transition pairs, if consistent.
pub fn dim_from_pair_count(pairs: usize) -> Option<usize> {
    (2..=64).find(|&n| n * (n - 1) / 2 == pairs)
}

/// `Σ θ_lk (|l><k| + |k><l|)`.
pub fn dipole_from_couplings(dim: usize, theta: &[f64]) -> ComplexMatrix {
    let mut mu = ComplexMatrix::zeros(dim);
    for (&(l, k), &th) in transitions(dim).iter().zip(theta) {
        mu[(l, k)] = C64::new(th, 0.0);
        mu[(k, l)] = C64::new(th, 0.0);
    }
    mu
}

/// Extracts the couplings `θ_lk` from a real symmetric, zero-diagonal matrix.
pub fn couplings_from_dipole(mu: &ComplexMatrix) -> Result<Vec<f64>, DynamicsError> {
    let n = mu.dim();
    for i in 0..n {
        if mu[(i, i)].norm() > 1e-12 {
            return Err(DynamicsError::BadDipole(format!(
                "diagonal entry {} is nonzero",
                i + 1
            )));
        }
    }
    let mut out = Vec::new();
    for (l, k) in transitions(n) {
        let a = mu[(l, k)];
        let b = mu[(k, l)];
        if a.im.abs() > 1e-12 || (a - b).norm() > 1e-12 {
            return Err(DynamicsError::BadDipole(format!(
                "entry ({}, {}) is not real symmetric",
                l + 1,
                k + 1
            )));
        }
        out.push(a.re);
    }
    Ok(out)
}

/// The true plant: `H = B diag(ω) B†`, `μ = Σ θ_lk σ_x^{lk}`.
///
/// `B` (the basis change) is the identity unless the Hamiltonian was
/// supplied in a basis other than its eigenbasis; the dipole and the output
/// projectors always live in the basis the system is written in.
#[derive(Clone, Debug)]
pub struct QuantumSystem {
    omega: Vec<f64>,
    theta: Vec<f64>,
    basis_change: Option<ComplexMatrix>,
    hamiltonian: ComplexMatrix,
    dipole: ComplexMatrix,
}

impl QuantumSystem {
    pub fn new(omega: Vec<f64>, theta: Vec<f64>) -> Result<Self, DynamicsError> {
        Self::build(omega, theta, None)
    }

    pub fn with_basis_change(
        omega: Vec<f64>,
        theta: Vec<f64>,
        basis_change: ComplexMatrix,
    ) -> Result<Self, DynamicsError> {
        let n = basis_change.dim();
        let dev = (&basis_change.matmul(&basis_change.adjoint()) - &ComplexMatrix::identity(n))
            .frobenius_norm();
        if dev > 1e-9 {
            return Err(DynamicsError::NotUnitary(dev));
        }
        Self::build(omega, theta, Some(basis_change))
    }

    /// Builds a system from a Hamiltonian matrix written in the measurement
    /// basis. Non-diagonal input is diagonalized; its eigenvalues become `ω`.
    pub fn from_hamiltonian(
        hamiltonian: &HermitianOperator,
        theta: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        let h = hamiltonian.matrix();
        let n = h.dim();
        let off_diag = transitions(n)
            .iter()
            .map(|&(l, k)| h[(l, k)].norm())
            .fold(0.0, f64::max);
        if off_diag == 0.0 {
            return Self::new(h.diag_real(), theta);
        }
        let eig = hermitian_eigendecompose(hamiltonian);
        // Columns of E† are the eigenvectors.
        Self::with_basis_change(eig.eigenvalues.clone(), theta, eig.eigenvectors.adjoint())
    }

    fn build(
        omega: Vec<f64>,
        theta: Vec<f64>,
        basis_change: Option<ComplexMatrix>,
    ) -> Result<Self, DynamicsError> {
        let dim = omega.len();
        if dim < 2 {
            return Err(LinalgError::DimensionTooSmall(dim).into());
        }
        let expected = dim * (dim - 1) / 2;
        if theta.len() != expected {
            return Err(DynamicsError::WrongCouplingCount {
                dim,
                expected,
                got: theta.len(),
            });
        }
        if let Some(b) = &basis_change {
            if b.dim() != dim {
                return Err(DynamicsError::DimensionMismatch {
                    state: b.dim(),
                    system: dim,
                });
            }
        }
        let diag = ComplexMatrix::from_diag(&omega);
        let mut hamiltonian = match &basis_change {
            Some(b) => b.matmul(&diag).matmul(&b.adjoint()),
            None => diag,
        };
        hamiltonian.hermitize();
        let dipole = dipole_from_couplings(dim, &theta);
        Ok(Self {
            omega,
            theta,
            basis_change,
            hamiltonian,
            dipole,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// Free-Hamiltonian eigenvalues `ω_j`.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn basis_change(&self) -> Option<&ComplexMatrix> {
        self.basis_change.as_ref()
    }

    pub fn is_eigenbasis(&self) -> bool {
        self.basis_change.is_none()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn dipole(&self) -> &ComplexMatrix {
        &self.dipole
    }

    /// `ω_lk = ω_l - ω_k` for each transition pair.
    pub fn transition_frequencies(&self) -> Vec<f64> {
        transitions(self.dim())
            .iter()
            .map(|&(l, k)| self.omega[l] - self.omega[k])
            .collect()
    }
}

/// `-i[H + uμ, ρ]`.
pub fn true_rhs(
    rho: &ComplexMatrix,
    system: &QuantumSystem,
    u: f64,
) -> Result<ComplexMatrix, DynamicsError> {
    if rho.dim() != system.dim() {
        return Err(DynamicsError::DimensionMismatch {
            state: rho.dim(),
            system: system.dim(),
        });
    }
    Ok(liouville_rhs(rho, system.hamiltonian(), system.dipole(), u))
}

/// `-i[H + uM, ρ]` for arbitrary Hermitian `H` and `M`.
pub(crate) fn liouville_rhs(
    rho: &ComplexMatrix,
    h: &ComplexMatrix,
    m: &ComplexMatrix,
    u: f64,
) -> ComplexMatrix {
    let n = rho.dim();
    let mut k = h.clone();
    k.axpy(u, m);
    let mut out = ComplexMatrix::zeros(n);
    let minus_i = C64::new(0.0, -1.0);
    for r in 0..n {
        for c in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += k[(r, j)] * rho[(j, c)] - rho[(r, j)] * k[(j, c)];
            }
            out[(r, c)] = minus_i * acc;
        }
    }
    out
}

/// Diagonal of `ρ` (populations `tr(P_j ρ)`).
pub fn populations(rho: &ComplexMatrix) -> Vec<f64> {
    rho.diag_real()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    #[default]
    Cos,
    Sin,
}

impl Waveform {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Waveform::Cos => x.cos(),
            Waveform::Sin => x.sin(),
        }
    }

    /// Phase `φ` with `waveform(x) = cos(x - φ)`.
    pub fn phase(self) -> f64 {
        match self {
            Waveform::Cos => 0.0,
            Waveform::Sin => FRAC_PI_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub waveform: Waveform,
}

/// Multi-tone control field with an optional amplitude bias and additive
/// Gaussian dither.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    pub tones: Vec<Tone>,
    pub amplitude_bias: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ControlField {
    pub fn noiseless(tones: Vec<Tone>) -> Self {
        Self {
            tones,
            amplitude_bias: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    /// The commanded field `Σ A·waveform(ν t)`, without bias or noise. This
    /// is what the estimator believes is applied.
    pub fn nominal(&self, t: f64) -> f64 {
        self.tones
            .iter()
            .map(|tone| tone.amplitude * tone.waveform.eval(tone.frequency * t))
            .sum()
    }

    /// The field the plant actually sees, given the standard-normal draw `w`
    /// held for the current step.
    pub fn value(&self, t: f64, w: f64) -> f64 {
        let deterministic: f64 = self
            .tones
            .iter()
            .map(|tone| {
                (tone.amplitude + self.amplitude_bias) * tone.waveform.eval(tone.frequency * t)
            })
            .sum();
        deterministic + self.noise_sigma * w
    }

    pub fn max_frequency(&self) -> f64 {
        self.tones
            .iter()
            .map(|t| t.frequency.abs())
            .fold(0.0, f64::max)
    }

    pub fn noise_stream(&self) -> NoiseStream {
        NoiseStream::new(self.seed)
    }
}

/// `field_value` for a caller that owns the noise stream: draws one sample
/// (if the field is noisy) and evaluates the applied field.
pub fn field_value(field: &ControlField, t: f64, stream: &mut NoiseStream) -> f64 {
    let w = if field.noise_sigma > 0.0 {
        stream.draw()
    } else {
        0.0
    };
    field.value(t, w)
}

/// Seeded standard-normal sample stream. Draws are consumed once per
/// integrator step so a run is reproducible from its seed alone.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn draw(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub delay: f64,
    pub bias: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub sample_period: f64,
    /// Observed populations (0-based). The estimator only uses these.
    pub channels: Vec<usize>,
}

impl MeasurementModel {
    pub fn ideal(dim: usize, sample_period: f64) -> Self {
        Self {
            delay: 0.0,
            bias: 0.0,
            noise_sigma: 0.0,
            seed: 0,
            sample_period,
            channels: (0..dim).collect(),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.delay == 0.0 && self.bias == 0.0 && self.noise_sigma == 0.0
    }
}

/// Ring buffer of past population vectors, one per integrator step.
#[derive(Clone, Debug)]
pub struct OutputHistory {
    buf: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl OutputHistory {
    /// Keeps enough samples to look back `delay_steps` steps.
    pub fn new(delay_steps: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(delay_steps + 1),
            capacity: delay_steps + 1,
        }
    }

    /// Pre-fills the buffer with a constant sample (used for warm-up).
    pub fn prefilled(delay_steps: usize, sample: &[f64]) -> Self {
        let mut h = Self::new(delay_steps);
        for _ in 0..h.capacity {
            h.push(sample.to_vec());
        }
        h
    }

    pub fn push(&mut self, sample: Vec<f64>) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(sample);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// The sample pushed `steps_back` pushes ago (0 = latest).
    pub fn lookback(&self, steps_back: usize) -> Result<&[f64], DynamicsError> {
        if steps_back >= self.buf.len() {
            return Err(DynamicsError::InsufficientHistory {
                needed: steps_back + 1,
                available: self.buf.len(),
            });
        }
        Ok(&self.buf[self.buf.len() - 1 - steps_back])
    }
}

/// Delayed populations plus bias plus i.i.d. Gaussian noise per channel.
/// `noise` holds one standard-normal draw per level.
pub fn measured_output(
    history: &OutputHistory,
    model: &MeasurementModel,
    step: f64,
    noise: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    let delay_steps = (model.delay / step).round() as usize;
    let delayed = history.lookback(delay_steps)?;
    Ok(delayed
        .iter()
        .enumerate()
        .map(|(j, &p)| p + model.bias + model.noise_sigma * noise.get(j).copied().unwrap_or(0.0))
        .collect())
}

//! Lyapunov monitors, convergence metrics, Rabi-spectrum analysis and
//! identifiability checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{populations, transitions};
use crate::linalg::{
    generalized_pauli, hermitian_eigendecompose, ComplexMatrix, HermitianOperator, TransitionAxis,
};
use crate::ode::Trajectory;

/// Central tolerances.
pub mod tol {
    /// Predicate tolerance of the identifiability checks.
    pub const IDENTIFIABILITY: f64 = 1e-9;
    /// Rabi spectrum is degenerate when the smallest gap is below this
    /// fraction of the largest `|Ω|`.
    pub const RABI_DEGENERACY: f64 = 1e-6;
    /// Exact dissipation bound on second averaged runs.
    pub const DISSIPATION: f64 = 1e-12;
    /// Slack for the windowed average-decrease audit.
    pub const AVERAGE_DECREASE: f64 = 1e-6;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("gain gamma must be strictly positive, got {0}")]
    NonPositiveGain(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("window too short: need at least 3 samples, got {0}")]
    WindowTooShort(usize),
}

/// `½(y - ŷ)² + (θ - θ̂)² / (2γ)`.
pub fn lyapunov_2level(
    y: f64,
    y_hat: f64,
    theta: f64,
    theta_hat: f64,
    gamma: f64,
) -> Result<f64, DiagnosticsError> {
    if !(gamma > 0.0) {
        return Err(DiagnosticsError::NonPositiveGain(gamma));
    }
    Ok(0.5 * (y - y_hat).powi(2) + (theta - theta_hat).powi(2) / (2.0 * gamma))
}

/// `dV/dt = e · (-iθu tr(P[μ, ρ̂ - ρ])) - 2Γ e² ŷ (1 - ŷ)` for the
/// two-level normalized observer, with `e = y - ŷ`, `P = |1><1|` and exact
/// measurements. The first term is the mismatch between the true and
/// estimated dipole drives once the parameter law has cancelled the
/// `θ̂ - θ` cross term.
pub fn lyapunov_rate_2level(
    rho: &ComplexMatrix,
    rho_hat: &ComplexMatrix,
    theta: f64,
    u: f64,
    state_gain: f64,
) -> f64 {
    let y = rho[(0, 0)].re;
    let y_hat = rho_hat[(0, 0)].re;
    let e = y - y_hat;
    // tr(P[σ_x, X]) = X_10 - X_01 for P = |1><1|
    let diff = rho_hat - rho;
    let tr = diff[(1, 0)] - diff[(0, 1)];
    let drive = (num_complex::Complex64::new(0.0, theta * u) * tr).re;
    e * drive - 2.0 * state_gain * e * e * y_hat * (1.0 - y_hat)
}

/// `½ Σ_n tr(P_n(ξ̂ - ξ))² + Σ_lk 2(θ̂_lk - θ_lk)²/γ_lk`.
pub fn lyapunov_n(
    xi: &ComplexMatrix,
    xi_hat: &ComplexMatrix,
    theta: &[f64],
    theta_hat: &[f64],
    gamma: &[f64],
) -> Result<f64, DiagnosticsError> {
    if xi.dim() != xi_hat.dim() {
        return Err(DiagnosticsError::DimensionMismatch(format!(
            "states {} vs {}",
            xi.dim(),
            xi_hat.dim()
        )));
    }
    let pairs = transitions(xi.dim()).len();
    if theta.len() != pairs || theta_hat.len() != pairs || gamma.len() != pairs {
        return Err(DiagnosticsError::DimensionMismatch(format!(
            "expected {pairs} couplings and gains"
        )));
    }
    if let Some(&g) = gamma.iter().find(|&&g| !(g > 0.0)) {
        return Err(DiagnosticsError::NonPositiveGain(g));
    }
    let pop: f64 = populations(xi)
        .iter()
        .zip(populations(xi_hat))
        .map(|(a, b)| 0.5 * (b - a).powi(2))
        .sum();
    let par: f64 = theta
        .iter()
        .zip(theta_hat)
        .zip(gamma)
        .map(|((t, th), g)| 2.0 * (th - t).powi(2) / g)
        .sum();
    Ok(pop + par)
}

/// Largest `|analytic dV/dt - centered difference of V|` over a densely
/// recorded window.
pub fn lyapunov_rate_residual(
    times: &[f64],
    v: &[f64],
    rate: &[f64],
) -> Result<f64, DiagnosticsError> {
    let n = times.len();
    if n < 3 {
        return Err(DiagnosticsError::WindowTooShort(n));
    }
    if v.len() != n || rate.len() != n {
        return Err(DiagnosticsError::DimensionMismatch(
            "window channels differ in length".into(),
        ));
    }
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        let fd = (v[i + 1] - v[i - 1]) / (times[i + 1] - times[i - 1]);
        worst = worst.max((fd - rate[i]).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiReport {
    /// Rabi frequencies, ascending.
    pub omega: Vec<f64>,
    pub min_gap: f64,
    /// The largest pairwise gap, reported alongside the minimum.
    pub max_gap: f64,
    pub degenerate: bool,
    /// `Γ / min_gap`.
    pub state_gain_margin: f64,
    /// `max γ_lk / min_gap`.
    pub param_gain_margin: f64,
}

/// Spectrum of `H_eff = Σ (A_lk θ_lk / 2) σ_x^{lk}`.
pub fn rabi_analysis(
    amplitudes: &[f64],
    theta: &[f64],
    state_gain: f64,
    param_gains: &[f64],
) -> RabiReport {
    let pairs = theta.len();
    let n = crate::dynamics::dim_from_pair_count(pairs).unwrap_or(2);
    let mut h = ComplexMatrix::zeros(n);
    for (p, (l, k)) in transitions(n).into_iter().enumerate() {
        let a = amplitudes.get(p).copied().unwrap_or(0.0);
        let sx = generalized_pauli(l + 1, k + 1, TransitionAxis::X, n)
            .expect("valid transition")
            .into_matrix();
        h.axpy(a * theta[p] / 2.0, &sx);
    }
    let eig = hermitian_eigendecompose(&HermitianOperator::new(h).expect("real symmetric"));
    let omega = eig.eigenvalues;
    let mut min_gap = f64::INFINITY;
    let mut max_gap = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let g = (omega[i] - omega[j]).abs();
            min_gap = min_gap.min(g);
            max_gap = max_gap.max(g);
        }
    }
    let scale = omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let degenerate = scale == 0.0 || min_gap < tol::RABI_DEGENERACY * scale;
    let max_gamma = param_gains.iter().cloned().fold(0.0, f64::max);
    RabiReport {
        omega,
        min_gap,
        max_gap,
        degenerate,
        state_gain_margin: state_gain / min_gap,
        param_gain_margin: max_gamma / min_gap,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub a2_ok: bool,
    pub a3_ok: bool,
    pub a1_connected: bool,
    pub min_transition_gap: f64,
}

/// Non-degenerate transitions, zero dipole diagonal, and connectivity of
/// the coupling graph (the controllability surrogate).
pub fn check_identifiability(omega: &[f64], mu: &ComplexMatrix) -> IdentifiabilityReport {
    let n = omega.len();
    let gaps: Vec<f64> = transitions(n)
        .iter()
        .map(|&(l, k)| (omega[l] - omega[k]).abs())
        .collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..gaps.len() {
        for j in (i + 1)..gaps.len() {
            min_gap = min_gap.min((gaps[i] - gaps[j]).abs());
        }
    }
    let a2_ok = gaps.iter().all(|&g| g > tol::IDENTIFIABILITY) && min_gap > tol::IDENTIFIABILITY;
    let a3_ok = mu.dim() == n && (0..n).all(|i| mu[(i, i)].norm() <= tol::IDENTIFIABILITY);

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            parent[r] = parent[parent[r]];
            r = parent[r];
        }
        r
    }
    if mu.dim() == n {
        for (l, k) in transitions(n) {
            if mu[(l, k)].norm() > tol::IDENTIFIABILITY {
                let (a, b) = (find(&mut parent, l), find(&mut parent, k));
                parent[a] = b;
            }
        }
    }
    let root = find(&mut parent, 0);
    let a1_connected = mu.dim() == n && (1..n).all(|i| find(&mut parent, i) == root);
    IdentifiabilityReport {
        a2_ok,
        a3_ok,
        a1_connected,
        min_transition_gap: if min_gap.is_finite() { min_gap } else { 0.0 },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub final_errors: Vec<f64>,
    pub max_final_error: f64,
    /// First recorded time after which every error stays below the
    /// tolerance; `None` when never reached.
    pub time_to_tolerance: Option<f64>,
    pub tolerance: f64,
    /// Rate `λ` of the fitted envelope `C e^{-λt}` of the largest error.
    pub decay_rate: Option<f64>,
}

/// Final errors, time-to-tolerance, and a decay-rate fit of the error
/// envelope (peaks over windows of `window` time units).
pub fn convergence_metrics(
    traj: &Trajectory,
    truth: &[f64],
    tolerance: f64,
    window: f64,
) -> ConvergenceMetrics {
    let err: Vec<f64> = traj
        .theta_hat
        .iter()
        .map(|th| {
            th.iter()
                .zip(truth)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let final_errors: Vec<f64> = traj
        .final_theta_hat()
        .map(|th| th.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect())
        .unwrap_or_default();
    let max_final_error = final_errors.iter().cloned().fold(0.0, f64::max);

    let time_to_tolerance = match err.iter().rposition(|&e| e >= tolerance) {
        None => traj.times.first().copied(),
        Some(i) if i + 1 < err.len() => Some(traj.times[i + 1]),
        Some(_) => None,
    };
    ConvergenceMetrics {
        final_errors,
        max_final_error,
        time_to_tolerance,
        tolerance,
        decay_rate: envelope_decay_rate(&traj.times, &err, window),
    }
}

/// Least-squares slope of `log(max over window)` against window centre.
pub fn envelope_decay_rate(times: &[f64], values: &[f64], window: f64) -> Option<f64> {
    if times.len() < 2 || !(window > 0.0) {
        return None;
    }
    let t0 = times[0];
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut start = 0;
    while start < times.len() {
        let w_end = times[start] + window;
        let mut end = start;
        let mut peak = 0.0f64;
        while end < times.len() && times[end] < w_end {
            peak = peak.max(values[end].abs());
            end += 1;
        }
        if end == times.len() && times[end - 1] - times[start] < 0.5 * window && !pts.is_empty() {
            break;
        }
        if peak > 0.0 && peak.is_finite() {
            pts.push((0.5 * (times[start] + times[end - 1]) - t0, peak.ln()));
        }
        start = end;
    }
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (den > 0.0).then(|| -num / den)
}

/// Means of `values` over consecutive windows of `period` time units
/// (only complete windows).
pub fn windowed_means(times: &[f64], values: &[f64], period: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if times.is_empty() || !(period > 0.0) {
        return out;
    }
    let t0 = times[0];
    let total = times[times.len() - 1] - t0;
    let windows = (total / period + 1e-9).floor() as usize;
    for w in 0..windows {
        let (a, b) = (t0 + w as f64 * period, t0 + (w + 1) as f64 * period);
        let sel: Vec<f64> = times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t >= a - 1e-12 && **t < b - 1e-12)
            .map(|(_, v)| *v)
            .collect();
        if !sel.is_empty() {
            out.push(sel.iter().sum::<f64>() / sel.len() as f64);
        }
    }
    out
}

/// Largest increase between successive entries (0 when non-increasing).
pub fn max_increase(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Identifiability directly from a dipole written as couplings.
pub fn check_identifiability_couplings(omega: &[f64], theta: &[f64]) -> IdentifiabilityReport {
    check_identifiability(
        omega,
        &crate::dynamics::dipole_from_couplings(omega.len(), theta),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::dipole_from_couplings;
    use num_complex::Complex64 as C64;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_level_lyapunov_examples() {
        assert_eq!(lyapunov_2level(0.3, 0.3, 1.0, 1.0, 0.1).unwrap(), 0.0);
        let v = lyapunov_2level(0.6, 0.5, 1.5, 1.0, 0.1).unwrap();
        assert!((v - 1.255).abs() < 1e-12);
        assert!(lyapunov_2level(0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn n_level_lyapunov_examples() {
        let xi = ComplexMatrix::from_diag(&[0.2, 0.3, 0.5]);
        let th = [1.3, 1.0, -1.5];
        assert_eq!(lyapunov_n(&xi, &xi, &th, &th, &[0.5; 3]).unwrap(), 0.0);
        let th_hat = [1.4, 1.0, -1.5];
        let v = lyapunov_n(&xi, &xi, &th, &th_hat, &[0.5; 3]).unwrap();
        assert!((v - 0.04).abs() < 1e-12);
        assert!(lyapunov_n(&xi, &ComplexMatrix::identity(2), &th, &th, &[0.5; 3]).is_err());
    }

    #[test]
    fn lyapunov_functions_are_nonnegative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let v = lyapunov_2level(
                rng.gen(),
                rng.gen(),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.01..2.0),
            )
            .unwrap();
            assert!(v >= 0.0);
            let a: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let th: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let thh: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = lyapunov_n(
                &ComplexMatrix::from_diag(&a),
                &ComplexMatrix::from_diag(&b),
                &th,
                &thh,
                &[0.3, 0.5, 1.0],
            )
            .unwrap();
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn rate_residual() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        assert_eq!(
            lyapunov_rate_residual(&t, &[2.0; 10], &[0.0; 10]).unwrap(),
            0.0
        );
        assert!(matches!(
            lyapunov_rate_residual(&t[..2], &[1.0; 2], &[0.0; 2]),
            Err(DiagnosticsError::WindowTooShort(2))
        ));
        // V = t², rate 2t: centered difference is exact for quadratics
        let v: Vec<f64> = t.iter().map(|x| x * x).collect();
        let r: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
        assert!(lyapunov_rate_residual(&t, &v, &r).unwrap() < 1e-12);
    }

    #[test]
    fn closed_form_two_level_rate_dissipation_term() {
        // identical states: only the injection term remains and it is zero
        let rho = ComplexMatrix::from_diag(&[0.4, 0.6]);
        assert_eq!(lyapunov_rate_2level(&rho, &rho, 1.0, 0.7, 1.0), 0.0);
        let rho_hat = ComplexMatrix::from_diag(&[0.3, 0.7]);
        let r = lyapunov_rate_2level(&rho, &rho_hat, 1.0, 0.0, 1.0);
        assert!((r - (-2.0 * 0.01 * 0.3 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn rabi_examples() {
        let r = rabi_analysis(&[1.0], &[1.0], 0.1, &[0.1]);
        assert!((r.omega[0] + 0.5).abs() < 1e-12 && (r.omega[1] - 0.5).abs() < 1e-12);
        assert!((r.min_gap - 1.0).abs() < 1e-12);
        assert!(!r.degenerate);

        let r = rabi_analysis(&[0.1; 3], &[1.3, 1.0, -1.5], 0.05, &[1.0; 3]);
        assert!(!r.degenerate);
        assert!(r.min_gap > 0.01);
        assert!(r.max_gap >= r.min_gap);

        let r = rabi_analysis(&[0.1; 3], &[0.0; 3], 0.05, &[1.0; 3]);
        assert!(r.degenerate);
        assert!(r.omega.iter().all(|w| w.abs() < 1e-15));
    }

    #[test]
    fn rabi_scales_linearly() {
        let a = rabi_analysis(&[0.1, 0.2, 0.3], &[1.3, 1.0, -1.5], 0.05, &[1.0; 3]);
        let b = rabi_analysis(&[0.3, 0.6, 0.9], &[1.3, 1.0, -1.5], 0.05, &[1.0; 3]);
        for (x, y) in a.omega.iter().zip(&b.omega) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
        assert!((3.0 * a.min_gap - b.min_gap).abs() < 1e-12);
    }

    #[test]
    fn identifiability_examples() {
        let mu = dipole_from_couplings(3, &[1.3, 1.0, -1.5]);
        let r = check_identifiability(&[0.0, 1.0, 3.0], &mu);
        assert!(r.a2_ok && r.a3_ok && r.a1_connected);
        assert!((r.min_transition_gap - 1.0).abs() < 1e-12);

        assert!(!check_identifiability(&[0.0, 1.0, 2.0], &mu).a2_ok);

        let mut diag = mu.clone();
        diag[(0, 0)] = C64::new(0.1, 0.0);
        assert!(!check_identifiability(&[0.0, 1.0, 3.0], &diag).a3_ok);

        let disconnected = dipole_from_couplings(3, &[1.0, 0.0, 0.0]);
        assert!(!check_identifiability(&[0.0, 1.0, 3.0], &disconnected).a1_connected);
    }

    #[test]
    fn transition_gap_check_is_permutation_symmetric() {
        let mu = dipole_from_couplings(4, &[1.0; 6]);
        let base = [0.0, 1.0, 3.0, 7.0];
        let perms = [
            [3.0, 0.0, 7.0, 1.0],
            [7.0, 3.0, 1.0, 0.0],
            [1.0, 7.0, 0.0, 3.0],
        ];
        let r0 = check_identifiability(&base, &mu).a2_ok;
        for p in perms {
            assert_eq!(check_identifiability(&p, &mu).a2_ok, r0);
        }
        let ladder = [0.0, 1.0, 2.0, 4.0];
        assert!(!check_identifiability(&ladder, &mu).a2_ok);
        assert!(!check_identifiability(&[2.0, 0.0, 4.0, 1.0], &mu).a2_ok);
    }

    fn synthetic(theta_hat: impl Fn(f64) -> f64) -> Trajectory {
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.1).collect();
        Trajectory {
            theta_hat: times.iter().map(|&t| vec![theta_hat(t)]).collect(),
            times,
            ..Default::default()
        }
    }

    #[test]
    fn convergence_examples() {
        let exact = convergence_metrics(&synthetic(|_| 1.0), &[1.0], 0.05, 5.0);
        assert_eq!(exact.max_final_error, 0.0);
        assert_eq!(exact.time_to_tolerance, Some(0.0));

        let decaying = convergence_metrics(
            &synthetic(|t| 1.0 + 0.5 * (-0.1 * t).exp() * (3.0 * t).cos()),
            &[1.0],
            0.05,
            5.0,
        );
        let ttt = decaying.time_to_tolerance.unwrap();
        assert!(ttt > 20.0 && ttt < 30.0, "{ttt}");
        let rate = decaying.decay_rate.unwrap();
        assert!((rate - 0.1).abs() < 0.02, "{rate}");

        let diverging = convergence_metrics(&synthetic(|t| 1.0 + 0.01 * t), &[1.0], 0.05, 5.0);
        assert_eq!(diverging.time_to_tolerance, None);
        assert!(diverging.decay_rate.unwrap() < 0.0);
    }

    #[test]
    fn windowed_mean_helpers() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| -x).collect();
        let m = windowed_means(&t, &v, 1.0);
        assert_eq!(m.len(), 9);
        assert_eq!(max_increase(&m), 0.0);
        assert_eq!(max_increase(&[1.0, 2.0, 1.5]), 1.0);
    }
}

//! Small dense complex-matrix algebra for density matrices and Hermitian
//! operators.
//!
//! Everything here is sized for the few-level regime (N ≤ 16): matrices are
//! stored densely in row-major order and the eigensolver is a cyclic complex
//! Jacobi iteration.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Absolute tolerance on `|a_ij - conj(a_ji)|` for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Largest dimension the eigensolver is validated for.
pub const MAX_DIM: usize = 16;

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("expected {expected} entries for a {dim}x{dim} matrix, got {got}")]
    WrongEntryCount {
        dim: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not anti-Hermitian (max deviation {0:.3e})")]
    NotAntiHermitian(f64),
    #[error("transition index ({l}, {k}) invalid for dimension {dim}: need 1 <= l < k <= dim")]
    BadTransition { l: usize, k: usize, dim: usize },
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if dim < 2 {
            return Err(LinalgError::DimensionTooSmall(dim));
        }
        if data.len() != dim * dim {
            return Err(LinalgError::WrongEntryCount {
                dim,
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from rows of complex entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::WrongEntryCount {
                    dim,
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(dim, data)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// `|psi><psi|`.
    pub fn outer(psi: &[C64]) -> Self {
        let n = psi.len();
        let mut m = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = psi[r] * psi[c].conj();
            }
        }
        m
    }

    /// `|l><k|` in dimension `dim` (0-based indices).
    pub fn ket_bra(dim: usize, l: usize, k: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(l, k)] = ONE;
        m
    }

    /// Projector `P_j = |j><j|` (0-based index).
    pub fn projector(dim: usize, j: usize) -> Self {
        Self::ket_bra(dim, j, j)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut m = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                m[(c, r)] = self[(r, c)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for r in 0..n {
            for c in 0..n {
                acc += self.data[r * n + c] * other.data[c * n + r];
            }
        }
        acc
    }

    pub fn diag_real(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, i)].re).collect()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y * a;
        }
    }

    /// `self += a * other` for complex `a`.
    pub fn axpy_c(&mut self, a: C64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y * a;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * other.data[k * n + c];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        (0..n)
            .map(|r| (0..n).map(|c| self.data[r * n + c] * v[c]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|a_ij - conj(a_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Largest `|a_ij + conj(a_ji)|`.
    pub fn antihermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] + self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Replaces the matrix by its Hermitian part `(A + A†)/2`.
    pub fn hermitize(&mut self) {
        let n = self.dim;
        for r in 0..n {
            self[(r, r)] = C64::new(self[(r, r)].re, 0.0);
            for c in (r + 1)..n {
                let avg = (self[(r, c)] + self[(c, r)].conj()) * 0.5;
                self[(r, c)] = avg;
                self[(c, r)] = avg.conj();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_same_dim(&self, other: &Self) -> Result<(), LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (x, y) in self.data.iter_mut().zip(&rhs.data) {
            *x += y;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (x, y) in self.data.iter_mut().zip(&rhs.data) {
            *x -= y;
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

/// A matrix verified to be Hermitian within [`HERMITIAN_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self, LinalgError> {
        let dev = matrix.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(LinalgError::NotHermitian(dev));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl AsRef<ComplexMatrix> for HermitianOperator {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// Axis selector for [`generalized_pauli`], including the two-level identity `I^{lk}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionAxis {
    X,
    Y,
    Z,
    I,
}

/// The 2×2 Pauli matrix for `axis`.
pub fn pauli(axis: PauliAxis) -> HermitianOperator {
    let m = match axis {
        PauliAxis::X => [ZERO, ONE, ONE, ZERO],
        PauliAxis::Y => [ZERO, -I, I, ZERO],
        PauliAxis::Z => [ONE, ZERO, ZERO, -ONE],
    };
    HermitianOperator(ComplexMatrix {
        dim: 2,
        data: m.to_vec(),
    })
}

/// Pauli-like operators attached to the transition between levels `l` and
/// `k` (1-based, `l < k`) of an N-level system:
///
/// - `σ_x^{lk} = |l><k| + |k><l|`
/// - `σ_y^{lk} = -i|l><k| + i|k><l|`
/// - `σ_z^{lk} = P_l - P_k`
/// - `I^{lk} = P_l + P_k`
pub fn generalized_pauli(
    l: usize,
    k: usize,
    axis: TransitionAxis,
    dim: usize,
) -> Result<HermitianOperator, LinalgError> {
    if dim < 2 {
        return Err(LinalgError::DimensionTooSmall(dim));
    }
    if l == 0 || l >= k || k > dim {
        return Err(LinalgError::BadTransition { l, k, dim });
    }
    let (a, b) = (l - 1, k - 1);
    let mut m = ComplexMatrix::zeros(dim);
    match axis {
        TransitionAxis::X => {
            m[(a, b)] = ONE;
            m[(b, a)] = ONE;
        }
        TransitionAxis::Y => {
            m[(a, b)] = -I;
            m[(b, a)] = I;
        }
        TransitionAxis::Z => {
            m[(a, a)] = ONE;
            m[(b, b)] = -ONE;
        }
        TransitionAxis::I => {
            m[(a, a)] = ONE;
            m[(b, b)] = ONE;
        }
    }
    Ok(HermitianOperator(m))
}

/// `AB - BA`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    a.check_same_dim(b)?;
    Ok(commutator_unchecked(a, b))
}

pub(crate) fn commutator_unchecked(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut ab = a.matmul(b);
    ab -= &b.matmul(a);
    ab
}

/// Spectral decomposition `M = E† diag(Ω) E`.
///
/// Row `r` of `E` is the conjugate transpose of the `r`-th eigenvector, so
/// for real symmetric input the rows are the eigenvectors themselves.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `E† diag(f(Ω)) E` for a scalar function of the spectrum.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let e = &self.eigenvectors;
        let mut out = ComplexMatrix::zeros(n);
        for (m, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            for r in 0..n {
                let left = e[(m, r)].conj() * w;
                for c in 0..n {
                    out[(r, c)] += left * e[(m, c)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply(|x| C64::new(x, 0.0))
    }

    /// The `m`-th eigenvector as a column (ascending eigenvalue order).
    pub fn eigenvector(&self, m: usize) -> Vec<C64> {
        let n = self.eigenvalues.len();
        (0..n).map(|c| self.eigenvectors[(m, c)].conj()).collect()
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations.
///
/// Eigenvalues are returned ascending. Each eigenvector is rescaled so its
/// first component with magnitude above `1e-12` is real and positive, which
/// makes `E` deterministic (and real for real symmetric input).
pub fn hermitian_eigendecompose(m: &HermitianOperator) -> EigenDecomposition {
    let n = m.dim();
    let mut a = m.matrix().clone();
    a.hermitize();
    let mut v = ComplexMatrix::identity(n);

    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                // Phase that makes the pivot real, followed by a real rotation.
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // J acts on the (p, q) plane:
                // J_pp = c, J_pq = s, J_qp = -s e^{-iφ}, J_qq = c e^{-iφ}
                let jpp = C64::new(c, 0.0);
                let jpq = C64::new(s, 0.0);
                let jqp = -phase.conj() * s;
                let jqq = phase.conj() * c;
                // A <- A J
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                // A <- J† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                // V <- V J
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut e = ComplexMatrix::zeros(n);
    for (row, &col) in order.iter().enumerate() {
        eigenvalues.push(a[(col, col)].re);
        let mut vec: Vec<C64> = (0..n).map(|k| v[(k, col)]).collect();
        let norm = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let pivot = vec
            .iter()
            .copied()
            .find(|z| z.norm() > 1e-12)
            .unwrap_or(ONE);
        let fix = pivot.conj() / pivot.norm() / norm;
        for z in vec.iter_mut() {
            *z *= fix;
        }
        for k in 0..n {
            e[(row, k)] = vec[k].conj();
        }
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors: e,
    }
}

/// `e^{iGt} ρ e^{-iGt}` via the spectral decomposition of `G`.
pub fn unitary_conjugate(
    rho: &ComplexMatrix,
    g: &HermitianOperator,
    t: f64,
) -> Result<ComplexMatrix, LinalgError> {
    rho.check_same_dim(g.matrix())?;
    let eig = hermitian_eigendecompose(g);
    let u = eig.apply(|lam| C64::from_polar(1.0, lam * t));
    let mut out = u.matmul(rho).matmul(&u.adjoint());
    // Conjugation is trace preserving; pin the roundoff.
    let drift = (rho.trace() - out.trace()) / rho.dim() as f64;
    for i in 0..rho.dim() {
        out[(i, i)] += drift;
    }
    Ok(out)
}

/// Matrix exponential of an anti-Hermitian matrix `K`, computed from the
/// spectrum of the Hermitian matrix `iK`.
pub fn expm_antihermitian(k: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let dev = k.antihermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(LinalgError::NotAntiHermitian(dev));
    }
    let mut h = k.scale(I);
    h.hermitize();
    let eig = hermitian_eigendecompose(&HermitianOperator(h));
    // K = -iH  =>  exp(K) = E† diag(e^{-iΩ}) E
    Ok(eig.apply(|lam| C64::from_polar(1.0, -lam)))
}

/// Rank-one retraction: the pure state `|v><v|` built from the dominant
/// eigenvector of `rho`.
pub fn nearest_pure_state(rho: &ComplexMatrix) -> ComplexMatrix {
    let mut h = rho.clone();
    h.hermitize();
    let eig = hermitian_eigendecompose(&HermitianOperator(h));
    let top = eig.eigenvector(rho.dim() - 1);
    ComplexMatrix::outer(&top)
}

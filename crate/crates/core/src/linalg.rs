//! Dense complex linear algebra on finite Hilbert spaces.
//!
//! Operators are plain `nalgebra` matrices. Vectorization is column stacking
//! everywhere in the crate: `vec(X)[i + d*j] = X[i, j]`, so that
//! `vec(A X B) = (B^T ⊗ A) vec(X)`. `nalgebra` stores matrices column-major,
//! which makes `vec` a copy of the underlying slice.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::policy::NumericPolicy;

pub type C64 = Complex64;

/// A complex square matrix on a finite Hilbert space.
pub type Operator = DMatrix<C64>;

/// Largest 1-norm accepted by [`expm`].
///
/// Above this the scaling phase needs more than ~17 squarings and the result of
/// a non-contractive input overflows `f64` long before the squaring finishes.
pub const EXPM_NORM_LIMIT: f64 = 1e5;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> Operator {
    DMatrix::identity(d, d)
}

pub fn zeros(d: usize) -> Operator {
    DMatrix::zeros(d, d)
}

/// Builds an operator from real row-major entries.
pub fn from_real_rows(d: usize, rows: &[f64]) -> Operator {
    DMatrix::from_row_iterator(d, d, rows.iter().map(|&x| c64(x, 0.0)))
}

/// Diagonal operator with real entries.
pub fn diag(entries: &[f64]) -> Operator {
    DMatrix::from_diagonal(&DVector::from_iterator(
        entries.len(),
        entries.iter().map(|&x| c64(x, 0.0)),
    ))
}

/// Matrix unit `E_ij = |i><j|`.
pub fn basis_matrix(d: usize, i: usize, j: usize) -> Operator {
    let mut m = zeros(d);
    m[(i, j)] = ONE;
    m
}

/// Computational basis vector `|i>`.
pub fn ket(d: usize, i: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d);
    v[i] = ONE;
    v
}

pub fn projector(psi: &DVector<C64>) -> Operator {
    psi * psi.adjoint()
}

pub fn pauli_x() -> Operator {
    from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> Operator {
    DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> Operator {
    diag(&[1.0, -1.0])
}

/// `|0><1|` in the computational basis.
pub fn sigma_plus() -> Operator {
    basis_matrix(2, 0, 1)
}

/// `|1><0|` in the computational basis.
pub fn sigma_minus() -> Operator {
    basis_matrix(2, 1, 0)
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

pub fn trace(a: &Operator) -> C64 {
    a.trace()
}

/// Largest entrywise deviation `max |A - A^dagger|`.
pub fn hermiticity_error(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(a: &Operator) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Hermiticity check with the tolerance scaled by `max(1, max|A_ij|)`.
pub fn is_hermitian(a: &Operator, tol: f64) -> bool {
    a.is_square() && hermiticity_error(a) <= tol * max_abs(a).max(1.0)
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Real eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: Operator,
}

impl Spectrum {
    pub fn reconstruct(&self) -> Operator {
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&x| c64(x, 0.0)),
        ));
        &self.eigenvectors * lam * self.eigenvectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn eigenvector(&self, k: usize) -> DVector<C64> {
        self.eigenvectors.column(k).into_owned()
    }
}

/// Hermitian eigendecomposition with the default Hermiticity tolerance.
pub fn eig_hermitian(a: &Operator) -> Result<Spectrum> {
    eig_hermitian_with(a, NumericPolicy::DEFAULT.hermiticity)
}

pub fn eig_hermitian_with(a: &Operator, tol: f64) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !is_hermitian(a, tol) {
        return Err(Error::NotHermitian(hermiticity_error(a)));
    }
    let sym = (a + a.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// Ascending eigenvalues of a Hermitian operator.
pub fn eigvalsh(a: &Operator) -> Result<Vec<f64>> {
    eig_hermitian(a).map(|s| s.eigenvalues)
}

/// Kronecker product with `a` as the slow index:
/// `(a ⊗ b)[(i1*d2 + i2, j1*d2 + j2)] = a[i1, j1] * b[i2, j2]`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

/// Which tensor factor survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Partial trace of an operator on `C^d1 ⊗ C^d2`.
pub fn partial_trace(a: &Operator, dims: (usize, usize), keep: Keep) -> Result<Operator> {
    let (d1, d2) = dims;
    if !a.is_square() || a.nrows() != d1 * d2 {
        return Err(Error::DimensionMismatch(format!(
            "operator of size {}x{} on a {}x{} product space",
            a.nrows(),
            a.ncols(),
            d1,
            d2
        )));
    }
    Ok(match keep {
        Keep::First => DMatrix::from_fn(d1, d1, |i, j| {
            (0..d2).map(|k| a[(i * d2 + k, j * d2 + k)]).sum()
        }),
        Keep::Second => DMatrix::from_fn(d2, d2, |i, j| {
            (0..d1).map(|k| a[(k * d2 + i, k * d2 + j)]).sum()
        }),
    })
}

/// Matrix 1-norm (max column sum).
pub fn norm1(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by Padé scaling and squaring.
///
/// Works for operators and superoperator matrices alike. Inputs with a 1-norm
/// above [`EXPM_NORM_LIMIT`] or non-finite entries are rejected.
pub fn expm(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("expm needs a square matrix".into()));
    }
    let norm = norm1(a);
    if !norm.is_finite() || norm > EXPM_NORM_LIMIT {
        return Err(Error::Overflow { norm, limit: EXPM_NORM_LIMIT });
    }
    let out = a.clone().exp();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Overflow { norm, limit: EXPM_NORM_LIMIT });
    }
    Ok(out)
}

/// Column-stacking vectorization.
pub fn vec_op(x: &Operator) -> DVector<C64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_op`] for a `d x d` operator.
pub fn unvec(v: &DVector<C64>, d: usize) -> Operator {
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Trace distance `||a - b||_1 / 2` of two Hermitian operators.
pub fn trace_distance(a: &Operator, b: &Operator) -> Result<f64> {
    let diff = a - b;
    let ev = eig_hermitian_with(&diff, 1e-9)?;
    Ok(0.5 * ev.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    op: Operator,
    tolerance: f64,
}

impl DensityMatrix {
    pub fn new(op: Operator, tolerance: f64) -> Result<Self> {
        if !op.is_square() {
            return Err(Error::InvalidState("not square".into()));
        }
        if !is_hermitian(&op, tolerance.max(NumericPolicy::DEFAULT.hermiticity)) {
            return Err(Error::InvalidState(format!(
                "not Hermitian (asymmetry {:e})",
                hermiticity_error(&op)
            )));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > tolerance.max(1e-12) {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = eig_hermitian_with(&op, tolerance.max(NumericPolicy::DEFAULT.hermiticity))?.min();
        if min < -tolerance {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { op, tolerance })
    }

    /// Validates with the default PSD slack.
    pub fn from_operator(op: Operator) -> Result<Self> {
        Self::new(op, NumericPolicy::DEFAULT.psd_slack)
    }

    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        Self::from_operator(projector(&(psi / c64(norm, 0.0))))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { op: identity(d) / c64(d as f64, 0.0), tolerance: NumericPolicy::DEFAULT.psd_slack }
    }

    /// Gibbs state `exp(-beta H) / Z`.
    pub fn gibbs(h: &Operator, beta: f64) -> Result<Self> {
        let spec = eig_hermitian(h)?;
        let e0 = spec.min();
        let weights: Vec<f64> = spec.eigenvalues.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = weights.iter().sum();
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            weights.len(),
            weights.iter().map(|&w| c64(w / z, 0.0)),
        ));
        let op = &spec.eigenvectors * lam * spec.eigenvectors.adjoint();
        Self::from_operator(op)
    }

    /// Product state `self ⊗ other`.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            op: kron(&self.op, &other.op),
            tolerance: self.tolerance.max(other.tolerance),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.nrows()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eig_hermitian_with(&self.op, 1e-9).map(|s| s.eigenvalues).unwrap_or_default()
    }

    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }
}

//! Linear maps on operators: superoperator, Choi and Kraus forms, tensor
//! extensions, and complete-positivity / positivity certification.
//!
//! A [`Superoperator`] on a `d`-level system is the `d² x d²` matrix acting on
//! column-stacked operators (see [`crate::linalg`]). The Choi matrix is the
//! unnormalized `Σ_ij E_ij ⊗ Λ[E_ij]`; it is PSD exactly when the map is
//! completely positive. Kraus operators follow the `Λ[X] = Σ V† X V`
//! orientation.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    basis_matrix, c64, eig_hermitian_with, expm, hermiticity_error, identity, is_hermitian,
    projector, unvec, vec_op, Operator, C64, I, ONE, ZERO,
};
use crate::policy::NumericPolicy;

/// A linear map on `d x d` operators in column-stacked matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl Superoperator {
    pub fn new(dim: usize, matrix: DMatrix<C64>) -> Result<Self> {
        let n = dim * dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "superoperator on d={dim} needs a {n}x{n} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dim, matrix })
    }

    /// Builds the matrix from the images of the matrix units `E_ij`.
    pub fn from_fn(dim: usize, f: impl Fn(&Operator) -> Operator) -> Self {
        let n = dim * dim;
        let mut matrix = DMatrix::zeros(n, n);
        for j in 0..dim {
            for i in 0..dim {
                let image = f(&basis_matrix(dim, i, j));
                matrix.set_column(i + dim * j, &vec_op(&image));
            }
        }
        Self { dim, matrix }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: DMatrix::zeros(dim * dim, dim * dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: DMatrix::identity(dim * dim, dim * dim) }
    }

    /// Transposition `X ↦ X^T`.
    pub fn transposition(dim: usize) -> Self {
        Self::from_fn(dim, |x| x.transpose())
    }

    /// `X ↦ A X`.
    pub fn left(a: &Operator) -> Self {
        let d = a.nrows();
        Self { dim: d, matrix: identity(d).kronecker(a) }
    }

    /// `X ↦ X B`.
    pub fn right(b: &Operator) -> Self {
        let d = b.nrows();
        Self { dim: d, matrix: b.transpose().kronecker(&identity(d)) }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &Operator, b: &Operator) -> Self {
        Self { dim: a.nrows(), matrix: b.transpose().kronecker(a) }
    }

    /// `X ↦ U X U†`.
    pub fn unitary_conjugation(u: &Operator) -> Self {
        Self::sandwich(u, &u.adjoint())
    }

    /// Hamiltonian part `L_H[X] = -i [H, X]`.
    pub fn hamiltonian(h: &Operator) -> Self {
        let mut s = Self::left(h) - Self::right(h);
        s.matrix *= -I;
        s
    }

    /// Completely depolarizing map `X ↦ Tr(X) 1/d`.
    pub fn depolarizing(dim: usize) -> Self {
        Self::from_fn(dim, |x| identity(dim) * (x.trace() / c64(dim as f64, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        unvec(&(&self.matrix * vec_op(x)), self.dim)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Self { dim: self.dim, matrix: &self.matrix * &other.matrix }
    }

    pub fn scaled(&self, c: C64) -> Superoperator {
        Self { dim: self.dim, matrix: &self.matrix * c }
    }

    /// `exp(t S)`.
    pub fn exp(&self, t: f64) -> Result<Superoperator> {
        Ok(Self { dim: self.dim, matrix: expm(&(&self.matrix * c64(t, 0.0)))? })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Largest `|Tr S[E_ij] - δ_ij|` over the matrix units.
    pub fn trace_preservation_error(&self) -> f64 {
        self.trace_functional_error(ONE)
    }

    /// Largest `|Tr S[E_ij]|` over the matrix units.
    pub fn trace_annihilation_error(&self) -> f64 {
        self.trace_functional_error(ZERO)
    }

    fn trace_functional_error(&self, diag: C64) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for col in 0..d * d {
            let tr: C64 = (0..d).map(|k| self.matrix[(k + d * k, col)]).sum();
            let (i, j) = (col % d, col / d);
            let want = if i == j { diag } else { ZERO };
            worst = worst.max((tr - want).norm());
        }
        worst
    }

    /// Largest `|S[E_ji] - S[E_ij]†|`, zero exactly for hermiticity-preserving maps.
    pub fn hermiticity_preservation_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let a = unvec(&self.matrix.column(i + d * j).into_owned(), d);
                let b = unvec(&self.matrix.column(j + d * i).into_owned(), d);
                worst = worst.max((b - a.adjoint()).iter().fold(0.0, |m, z| m.max(z.norm())));
            }
        }
        worst
    }
}

impl Add for Superoperator {
    type Output = Superoperator;
    fn add(mut self, rhs: Superoperator) -> Superoperator {
        self.matrix += rhs.matrix;
        self
    }
}

impl Add<&Superoperator> for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        Superoperator { dim: self.dim, matrix: &self.matrix + &rhs.matrix }
    }
}

impl AddAssign<&Superoperator> for Superoperator {
    fn add_assign(&mut self, rhs: &Superoperator) {
        self.matrix += &rhs.matrix;
    }
}

impl Sub for Superoperator {
    type Output = Superoperator;
    fn sub(mut self, rhs: Superoperator) -> Superoperator {
        self.matrix -= rhs.matrix;
        self
    }
}

impl Sub<&Superoperator> for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        Superoperator { dim: self.dim, matrix: &self.matrix - &rhs.matrix }
    }
}

impl Neg for Superoperator {
    type Output = Superoperator;
    fn neg(self) -> Superoperator {
        Superoperator { dim: self.dim, matrix: -self.matrix }
    }
}

impl Mul<f64> for &Superoperator {
    type Output = Superoperator;
    fn mul(self, c: f64) -> Superoperator {
        self.scaled(c64(c, 0.0))
    }
}

/// Unnormalized Choi matrix `Σ_ij E_ij ⊗ Λ[E_ij]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub dim: usize,
    pub matrix: DMatrix<C64>,
}

impl ChoiMatrix {
    pub fn to_superoperator(&self) -> Superoperator {
        let d = self.dim;
        let n = d * d;
        let matrix = DMatrix::from_fn(n, n, |row, col| {
            let (a, b) = (row % d, row / d);
            let (i, j) = (col % d, col / d);
            self.matrix[(i * d + a, j * d + b)]
        });
        Superoperator { dim: d, matrix }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eig_hermitian_with(&self.matrix, NumericPolicy::DEFAULT.hermiticity)?.eigenvalues)
    }
}

/// Reshuffles the superoperator matrix into the Choi matrix.
pub fn to_choi(s: &Superoperator) -> ChoiMatrix {
    let d = s.dim;
    let n = d * d;
    // C[(i d + a, j d + b)] = Λ[E_ij][a, b] = S[(a + d b, i + d j)]
    let matrix = DMatrix::from_fn(n, n, |row, col| {
        let (i, a) = (row / d, row % d);
        let (j, b) = (col / d, col % d);
        s.matrix[(a + d * b, i + d * j)]
    });
    ChoiMatrix { dim: d, matrix }
}

/// Kraus operators `V_l` with `Λ[X] = Σ_l V_l† X V_l`.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub operators: Vec<Operator>,
}

impl KrausSet {
    pub fn to_superoperator(&self) -> Superoperator {
        let d = self.operators[0].nrows();
        let mut s = Superoperator::zero(d);
        for v in &self.operators {
            s += &Superoperator::sandwich(&v.adjoint(), v);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }
}

/// Outcome of the complete-positivity test.
#[derive(Debug, Clone)]
pub enum CpVerdict {
    CompletelyPositive { min_eigenvalue: f64 },
    /// The Choi eigenvector is an entangled state on `C^d ⊗ C^d` on which
    /// `Λ ⊗ id` produces a negative expectation.
    NotCompletelyPositive { eigenvalue: f64, witness: DVector<C64> },
}

impl CpVerdict {
    pub fn is_cp(&self) -> bool {
        matches!(self, CpVerdict::CompletelyPositive { .. })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            CpVerdict::CompletelyPositive { min_eigenvalue } => *min_eigenvalue,
            CpVerdict::NotCompletelyPositive { eigenvalue, .. } => *eigenvalue,
        }
    }
}

fn choi_spectrum(s: &Superoperator) -> Result<crate::linalg::Spectrum> {
    let choi = to_choi(s);
    if !is_hermitian(&choi.matrix, NumericPolicy::DEFAULT.hermiticity) {
        return Err(Error::NotHermiticityPreserving(hermiticity_error(&choi.matrix)));
    }
    eig_hermitian_with(&choi.matrix, NumericPolicy::DEFAULT.hermiticity)
}

/// CP iff the smallest Choi eigenvalue is `>= -tol`.
pub fn is_completely_positive(s: &Superoperator, tol: f64) -> Result<CpVerdict> {
    let spec = choi_spectrum(s)?;
    let min = spec.min();
    if min >= -tol {
        Ok(CpVerdict::CompletelyPositive { min_eigenvalue: min })
    } else {
        Ok(CpVerdict::NotCompletelyPositive { eigenvalue: min, witness: spec.eigenvector(0) })
    }
}

/// Kraus operators from the Choi eigendecomposition; eigenvalues within `tol`
/// of zero are dropped.
pub fn kraus_decompose(s: &Superoperator, tol: f64) -> Result<KrausSet> {
    let spec = choi_spectrum(s)?;
    if spec.min() < -tol {
        return Err(Error::NotCompletelyPositive(spec.min()));
    }
    let d = s.dim;
    let mut operators = Vec::new();
    for (k, &lam) in spec.eigenvalues.iter().enumerate().rev() {
        if lam <= tol {
            continue;
        }
        // Choi eigenvector v = vec(K) with Λ[X] = Σ K X K†; V = K†.
        let kmat = unvec(&spec.eigenvector(k), d) * c64(lam.sqrt(), 0.0);
        operators.push(kmat.adjoint());
    }
    if operators.is_empty() {
        operators.push(DMatrix::zeros(d, d));
    }
    Ok(KrausSet { operators })
}

/// `s1 ⊗ s2` acting on `C^{d1} ⊗ C^{d2}` operators.
pub fn tensor_product_map(s1: &Superoperator, s2: &Superoperator) -> Superoperator {
    let (d1, d2) = (s1.dim, s2.dim);
    let d = d1 * d2;
    let n = d * d;
    let mut matrix = DMatrix::zeros(n, n);
    for col in 0..n {
        let (i, j) = (col % d, col / d);
        let (i1, i2, j1, j2) = (i / d2, i % d2, j / d2, j % d2);
        let c1 = i1 + d1 * j1;
        let c2 = i2 + d2 * j2;
        for r1 in 0..d1 * d1 {
            let v1 = s1.matrix[(r1, c1)];
            if v1 == ZERO {
                continue;
            }
            let (a1, b1) = (r1 % d1, r1 / d1);
            for r2 in 0..d2 * d2 {
                let v2 = s2.matrix[(r2, c2)];
                if v2 == ZERO {
                    continue;
                }
                let (a2, b2) = (r2 % d2, r2 / d2);
                let row = (a1 * d2 + a2) + d * (b1 * d2 + b2);
                matrix[(row, col)] = v1 * v2;
            }
        }
    }
    Superoperator { dim: d, matrix }
}

/// `s ⊗ id_n`.
pub fn tensor_with_identity(s: &Superoperator, n: usize) -> Superoperator {
    tensor_product_map(s, &Superoperator::identity(n))
}

/// `id_n ⊗ s`.
pub fn identity_tensor(n: usize, s: &Superoperator) -> Superoperator {
    tensor_product_map(&Superoperator::identity(n), s)
}

/// Outcome of the heuristic positivity search.
#[derive(Debug, Clone)]
pub enum PositivityVerdict {
    /// Not a proof: the search found no pure state with a negative image.
    NoViolationFound { min_eigenvalue: f64 },
    Violated { eigenvalue: f64, witness: DVector<C64> },
}

impl PositivityVerdict {
    pub fn is_violated(&self) -> bool {
        matches!(self, PositivityVerdict::Violated { .. })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            PositivityVerdict::NoViolationFound { min_eigenvalue } => *min_eigenvalue,
            PositivityVerdict::Violated { eigenvalue, .. } => *eigenvalue,
        }
    }
}

fn image_min_eigenvalue(s: &Superoperator, psi: &DVector<C64>) -> f64 {
    let img = s.apply(&projector(psi));
    let herm = (&img + img.adjoint()) * c64(0.5, 0.0);
    eig_hermitian_with(&herm, f64::INFINITY).map(|sp| sp.min()).unwrap_or(f64::NAN)
}

/// Searches for a pure state whose image has a negative eigenvalue.
///
/// Each of the `samples` Haar-random starting states is refined by
/// `refine` steps of random local search with a shrinking step size. Samples
/// are independent and seeded from `(seed, index)`, so the verdict does not
/// depend on the number of worker threads.
pub fn probe_positivity(s: &Superoperator, samples: usize, refine: usize, seed: u64) -> PositivityVerdict {
    let d = s.dim;
    let best = (0..samples.max(1))
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut psi = crate::sampling::random_pure_state(&mut rng, d);
            let mut value = image_min_eigenvalue(s, &psi);
            let mut step = 0.5;
            for _ in 0..refine {
                let trial: DVector<C64> = DVector::from_fn(d, |i, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    psi[i] + c64(re, im) * step
                });
                let trial = &trial / c64(trial.norm(), 0.0);
                let v = image_min_eigenvalue(s, &trial);
                if v < value {
                    value = v;
                    psi = trial;
                } else {
                    step *= 0.85;
                }
            }
            (value, psi)
        })
        .reduce_with(|a, b| if b.0 < a.0 { b } else { a })
        .expect("at least one sample");
    if best.0 < -NumericPolicy::DEFAULT.psd_slack {
        PositivityVerdict::Violated { eigenvalue: best.0, witness: best.1 }
    } else {
        PositivityVerdict::NoViolationFound { min_eigenvalue: best.0 }
    }
}

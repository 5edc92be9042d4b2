//! Two non-interacting systems in a common bath: joint generators, the
//! factorization check, and entanglement probes of positive but not
//! completely positive dynamics.

use rayon::prelude::*;
use serde::Serialize;

use crate::bath::{BathModel, CrossCorrelationPolicy, TermId, TermRegistry};
use crate::channels::{tensor_product_map, Superoperator};
use crate::error::{Error, Result};
use crate::generators::{k2_finite_time, k2_markov, k4_finite_time, k4_markov, EigenoperatorSet, Markov};
use crate::linalg::{self, c64, kron, DensityMatrix, Operator};

fn unit(i: usize, j: usize) -> Operator {
    linalg::basis_matrix(2, i, j)
}

/// The uncorrelated and the entangling halves of the singlet-like projector.
pub fn singlet_blocks() -> (Operator, Operator) {
    let half = c64(0.5, 0.0);
    let uncorrelated = (kron(&unit(0, 0), &unit(1, 1)) + kron(&unit(1, 1), &unit(0, 0))) * half;
    let entangling = -(kron(&unit(0, 1), &unit(1, 0)) + kron(&unit(1, 0), &unit(0, 1))) * half;
    (uncorrelated, entangling)
}

/// Projector onto `(|01⟩ - |10⟩)/√2`.
pub fn singlet_state() -> DensityMatrix {
    let (a, b) = singlet_blocks();
    DensityMatrix::from_operator(a + b).expect("singlet projector is a state")
}

#[derive(Debug, Clone, Serialize)]
pub struct TranspositionDemo {
    pub input_spectrum: Vec<f64>,
    pub output_spectrum: Vec<f64>,
    #[serde(skip)]
    pub output: Operator,
}

/// Applies `T ⊗ id` to the singlet and reports both spectra (ascending).
pub fn transposition_demo() -> TranspositionDemo {
    let rho = singlet_state();
    let map = tensor_product_map(&Superoperator::transposition(2), &Superoperator::identity(2));
    let output = map.apply(rho.as_operator());
    TranspositionDemo {
        input_spectrum: rho.eigenvalues(),
        output_spectrum: linalg::eigvalsh(&output).expect("hermitian output"),
        output,
    }
}

/// `K1 ⊗ id + id ⊗ K2`.
pub fn direct_sum_lift(k1: &Superoperator, k2: &Superoperator) -> Superoperator {
    let a = tensor_product_map(k1, &Superoperator::identity(k2.dim()));
    let b = tensor_product_map(&Superoperator::identity(k1.dim()), k2);
    &a + &b
}

/// Two systems with Hamiltonians `h1`, `h2`, each coupled through the labels
/// of `bath` with the same coupling constant. Cross correlations between the
/// two label blocks follow `policy`.
#[derive(Debug, Clone)]
pub struct JointSystem {
    pub h1: Operator,
    pub h2: Operator,
    pub couplings1: Vec<Operator>,
    pub couplings2: Vec<Operator>,
    pub bath: BathModel,
    pub policy: CrossCorrelationPolicy,
    pub lambda: f64,
}

impl JointSystem {
    pub fn new(
        h1: Operator,
        h2: Operator,
        couplings1: Vec<Operator>,
        couplings2: Vec<Operator>,
        bath: BathModel,
        policy: CrossCorrelationPolicy,
        lambda: f64,
    ) -> Result<Self> {
        let n = bath.labels();
        if couplings1.len() != n || couplings2.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "each subsystem needs {n} coupling operators, got {} and {}",
                couplings1.len(),
                couplings2.len()
            )));
        }
        bath.joint(policy)?;
        Ok(Self { h1, h2, couplings1, couplings2, bath, policy, lambda })
    }

    /// Two identical qubits, `H = σz/2`, coupled through `σx` to an
    /// exponential bath with `g = τ = β = 1`.
    pub fn witness(policy: CrossCorrelationPolicy) -> Self {
        let h = linalg::pauli_z() * c64(0.5, 0.0);
        let bath = BathModel::exponential(1.0, 1.0, 1.0).expect("valid parameters");
        Self::new(h.clone(), h, vec![linalg::pauli_x()], vec![linalg::pauli_x()], bath, policy, 0.05)
            .expect("consistent witness")
    }

    pub fn with_policy(&self, policy: CrossCorrelationPolicy) -> Result<Self> {
        self.bath.joint(policy)?;
        Ok(Self { policy, ..self.clone() })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h1.nrows(), self.h2.nrows())
    }

    /// `H1 ⊗ id + id ⊗ H2`; there is no direct interaction term.
    pub fn hamiltonian(&self) -> Operator {
        let (d1, d2) = self.dims();
        kron(&self.h1, &linalg::identity(d2)) + kron(&linalg::identity(d1), &self.h2)
    }

    pub fn eigenoperators(&self) -> Result<(EigenoperatorSet, EigenoperatorSet)> {
        Ok((EigenoperatorSet::new(&self.h1, &self.couplings1)?, EigenoperatorSet::new(&self.h2, &self.couplings2)?))
    }

    pub fn joint_eigenoperators(&self) -> Result<EigenoperatorSet> {
        let (a, b) = self.eigenoperators()?;
        Ok(EigenoperatorSet::joint(&a, &b))
    }

    pub fn joint_bath(&self) -> Result<BathModel> {
        self.bath.joint(self.policy)
    }
}

fn k2_of(es: &EigenoperatorSet, bath: &BathModel, markov: Markov) -> Result<Superoperator> {
    match markov {
        Markov::Infinite => k2_markov(es, bath),
        Markov::Finite { t } => k2_finite_time(es, bath, t),
    }
}

fn k4_of(es: &EigenoperatorSet, bath: &BathModel, terms: &[TermId], markov: Markov) -> Result<Superoperator> {
    let reg = TermRegistry::standard();
    match markov {
        Markov::Infinite => k4_markov(es, bath, &reg, terms),
        Markov::Finite { t } => k4_finite_time(es, bath, &reg, terms, t),
    }
}

/// Second-order generator of the pair, summed over both label blocks.
pub fn joint_k2(sys: &JointSystem, markov: Markov) -> Result<Superoperator> {
    k2_of(&sys.joint_eigenoperators()?, &sys.joint_bath()?, markov)
}

/// Fourth-order generator of the pair. Tuples whose inner commutator pairs
/// operators of different subsystems vanish identically and are skipped.
pub fn joint_k4(sys: &JointSystem, terms: &[TermId], markov: Markov) -> Result<Superoperator> {
    k4_of(&sys.joint_eigenoperators()?, &sys.joint_bath()?, terms, markov)
}

/// Single-system generators at the given order, each with its own copy of the bath.
pub fn single_generators(
    sys: &JointSystem,
    order: u8,
    terms: &[TermId],
    markov: Markov,
) -> Result<(Superoperator, Superoperator)> {
    let (es1, es2) = sys.eigenoperators()?;
    match order {
        2 => Ok((k2_of(&es1, &sys.bath, markov)?, k2_of(&es2, &sys.bath, markov)?)),
        4 => Ok((k4_of(&es1, &sys.bath, terms, markov)?, k4_of(&es2, &sys.bath, terms, markov)?)),
        _ => Err(Error::InvalidParameter(format!("order must be 2 or 4, got {order}"))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub order: u8,
    pub kappa: f64,
    #[serde(skip)]
    pub k_joint: Superoperator,
    #[serde(skip)]
    pub k_direct_sum: Superoperator,
    /// `‖K_joint - (K1 ⊗ id + id ⊗ K2)‖_F`.
    pub residual: f64,
    /// Norm of the part of `K_joint` that comes from cross correlations.
    pub coupling_block_norm: f64,
}

impl FactorizationReport {
    pub fn factorizes(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

pub fn factorization_check(sys: &JointSystem, order: u8, markov: Markov) -> Result<FactorizationReport> {
    factorization_check_with(sys, order, &TermRegistry::default_terms(), markov)
}

pub fn factorization_check_with(
    sys: &JointSystem,
    order: u8,
    terms: &[TermId],
    markov: Markov,
) -> Result<FactorizationReport> {
    let joint = |s: &JointSystem| match order {
        2 => joint_k2(s, markov),
        4 => joint_k4(s, terms, markov),
        _ => Err(Error::InvalidParameter(format!("order must be 2 or 4, got {order}"))),
    };
    let k_joint = joint(sys)?;
    let uncorrelated = joint(&sys.with_policy(CrossCorrelationPolicy::Zero)?)?;
    let (k1, k2) = single_generators(sys, order, terms, markov)?;
    let k_direct_sum = direct_sum_lift(&k1, &k2);
    Ok(FactorizationReport {
        order,
        kappa: sys.policy.factor(),
        residual: (k_joint.matrix() - k_direct_sum.matrix()).norm(),
        coupling_block_norm: (k_joint.matrix() - uncorrelated.matrix()).norm(),
        k_joint,
        k_direct_sum,
    })
}

/// Factorization residuals over a grid of cross-correlation factors, in grid order.
pub fn kappa_sweep(sys: &JointSystem, order: u8, kappas: &[f64], markov: Markov) -> Result<Vec<FactorizationReport>> {
    kappas
        .par_iter()
        .map(|&kappa| factorization_check(&sys.with_policy(CrossCorrelationPolicy::Scaled { kappa })?, order, markov))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductDynamicsReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub max_distance: f64,
}

/// Compares `exp(t L_joint)[ρ1 ⊗ ρ2]` with `Λ¹_t[ρ1] ⊗ Λ²_t[ρ2]` for
/// Markov-limit generators `L = L0 + λ²K2 (+ λ⁴K4)`.
pub fn product_dynamics_check(
    sys: &JointSystem,
    order: u8,
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    times: &[f64],
) -> Result<ProductDynamicsReport> {
    let terms = TermRegistry::default_terms();
    let l2 = sys.lambda * sys.lambda;
    let build = |l0: Superoperator, k2: Superoperator, k4: Option<Superoperator>| {
        let mut l = &l0 + &(&k2 * l2);
        if let Some(k4) = k4 {
            l += &(&k4 * (l2 * l2));
        }
        l
    };
    let fourth = |es: &EigenoperatorSet, bath: &BathModel| -> Result<Option<Superoperator>> {
        if order == 4 {
            Ok(Some(k4_markov(es, bath, &TermRegistry::standard(), &terms)?))
        } else {
            Ok(None)
        }
    };
    let (es1, es2) = sys.eigenoperators()?;
    let l1 = build(Superoperator::hamiltonian(&sys.h1), k2_markov(&es1, &sys.bath)?, fourth(&es1, &sys.bath)?);
    let l2s = build(Superoperator::hamiltonian(&sys.h2), k2_markov(&es2, &sys.bath)?, fourth(&es2, &sys.bath)?);
    let joint_es = EigenoperatorSet::joint(&es1, &es2);
    let joint_bath = sys.joint_bath()?;
    let lj = build(
        Superoperator::hamiltonian(&sys.hamiltonian()),
        k2_markov(&joint_es, &joint_bath)?,
        fourth(&joint_es, &joint_bath)?,
    );
    let rho = rho1.tensor(rho2);
    let distances = times
        .par_iter()
        .map(|&t| {
            let joint = lj.exp(t)?.apply(rho.as_operator());
            let a = l1.exp(t)?.apply(rho1.as_operator());
            let b = l2s.exp(t)?.apply(rho2.as_operator());
            linalg::trace_distance(&joint, &kron(&a, &b))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProductDynamicsReport {
        times: times.to_vec(),
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        distances,
    })
}

/// A one-parameter family of single-system maps `Λ_t`.
pub trait MapFamily: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn map_at(&self, t: f64) -> Result<Superoperator>;
}

/// `Λ_t = (1 + e^{-t})/2 · id + (1 - e^{-t})/2 · T`: positive for every `t`,
/// completely positive only at `t = 0`.
#[derive(Debug, Clone)]
pub struct TransposeMixture {
    pub dim: usize,
}

impl MapFamily for TransposeMixture {
    fn name(&self) -> String {
        "transpose-mixture".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn map_at(&self, t: f64) -> Result<Superoperator> {
        let p = (1.0 + (-t).exp()) / 2.0;
        Ok(&(&Superoperator::identity(self.dim) * p) + &(&Superoperator::transposition(self.dim) * (1.0 - p)))
    }
}

/// `Λ_t = exp(t L)` for a fixed generator.
#[derive(Debug, Clone)]
pub struct Semigroup {
    pub name: String,
    pub generator: Superoperator,
}

impl MapFamily for Semigroup {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.generator.dim()
    }

    fn map_at(&self, t: f64) -> Result<Superoperator> {
        self.generator.exp(t)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairStep {
    pub t: f64,
    /// Spectrum of `(Λ_t ⊗ Λ_t)[probe]`.
    pub both: Vec<f64>,
    /// Spectrum of `(Λ_t ⊗ id)[probe]`.
    pub one_sided: Vec<f64>,
}

impl PairStep {
    pub fn min_both(&self) -> f64 {
        self.both.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_one_sided(&self) -> f64 {
        self.one_sided.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub family: String,
    pub tolerance: f64,
    pub steps: Vec<PairStep>,
    /// First grid time at which `(Λ_t ⊗ Λ_t)[probe]` has an eigenvalue below `-tolerance`.
    pub first_violation_both: Option<f64>,
    /// Same for `(Λ_t ⊗ id)[probe]`.
    pub first_violation_one_sided: Option<f64>,
}

impl PairReport {
    pub fn min_both(&self) -> f64 {
        self.steps.iter().map(PairStep::min_both).fold(f64::INFINITY, f64::min)
    }

    pub fn min_one_sided(&self) -> f64 {
        self.steps.iter().map(PairStep::min_one_sided).fold(f64::INFINITY, f64::min)
    }
}

/// Evolves one or both halves of `probe` with `family` and records the spectra.
pub fn pair_dynamics_experiment(
    family: &dyn MapFamily,
    probe: &DensityMatrix,
    times: &[f64],
    tolerance: f64,
) -> Result<PairReport> {
    let d = family.dim();
    if probe.dim() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "probe has dimension {}, expected {} for a pair of {d}-level systems",
            probe.dim(),
            d * d
        )));
    }
    let id = Superoperator::identity(d);
    let steps = times
        .par_iter()
        .map(|&t| {
            let map = family.map_at(t)?;
            let both = tensor_product_map(&map, &map).apply(probe.as_operator());
            let one = tensor_product_map(&map, &id).apply(probe.as_operator());
            let herm = |x: Operator| (&x + x.adjoint()) * c64(0.5, 0.0);
            Ok(PairStep { t, both: linalg::eigvalsh(&herm(both))?, one_sided: linalg::eigvalsh(&herm(one))? })
        })
        .collect::<Result<Vec<PairStep>>>()?;
    let first = |f: fn(&PairStep) -> f64| steps.iter().find(|s| f(s) < -tolerance).map(|s| s.t);
    Ok(PairReport {
        family: family.name(),
        tolerance,
        first_violation_both: first(PairStep::min_both),
        first_violation_one_sided: first(PairStep::min_one_sided),
        steps,
    })
}

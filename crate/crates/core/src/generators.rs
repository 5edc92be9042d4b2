//! Second- and fourth-order weak-coupling generators and their evolution.
//!
//! A system Hamiltonian `H_S` with non-degenerate spectrum `ε_r` defines the
//! eigenoperators `V_j = |r⟩⟨s|` with Bohr frequencies `ω_j = ε_r - ε_s`. A
//! coupling `H_SR = Σ_a A_a ⊗ B_a` is expanded as `A_a = Σ_j w_ja V_j` with
//! `w_ja = ⟨r|A_a|s⟩`, so the bath operator attached to `V_j` is
//! `Σ_a w_ja B_a` and its correlations are bilinear in the weights.
//!
//! The second-order generator is
//!
//! ```text
//! K2[ρ] = Σ_jk Ω̂⁺_kj(ω_j) [V_j ρ, V_k] + Ω̂⁻_jk(ω_j) [V_k, ρ V_j]
//! ```
//!
//! with finite-time coefficients `∫_0^t e^{-iω_j s} Ω(s) ds` or their
//! `t → ∞` limits. Fourth-order terms come from [`TermRegistry`] plugins.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{BathModel, FourthOrderTerm, Sign, TermId, TermRegistry};
use crate::channels::Superoperator;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, kron, DensityMatrix, Operator, C64, ZERO};
use crate::ode::{self, OdeOptions};
use crate::policy::NumericPolicy;

#[derive(Debug, Clone)]
pub struct Eigenoperator {
    pub omega: f64,
    pub op: Operator,
    /// `w_ja` for every bath coupling label `a`.
    pub weights: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct EigenoperatorSet {
    dim: usize,
    energies: Vec<f64>,
    basis: Operator,
    entries: Vec<Eigenoperator>,
    labels: usize,
}

impl EigenoperatorSet {
    /// Eigenoperators of `h_s`, with coupling `a` attached to bath label `a`.
    pub fn new(h_s: &Operator, couplings: &[Operator]) -> Result<Self> {
        Self::with_policy(h_s, couplings, &NumericPolicy::DEFAULT)
    }

    pub fn with_policy(h_s: &Operator, couplings: &[Operator], policy: &NumericPolicy) -> Result<Self> {
        let d = h_s.nrows();
        if !h_s.is_square() || d == 0 {
            return Err(Error::DimensionMismatch("system Hamiltonian must be square and non-empty".into()));
        }
        for (a, c) in couplings.iter().enumerate() {
            if c.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "coupling {a} has shape {:?}, expected ({d}, {d})",
                    c.shape()
                )));
            }
            if !linalg::is_hermitian(c, policy.hermiticity) {
                return Err(Error::NotHermitian(linalg::hermiticity_error(c)));
            }
        }
        let spec = linalg::eig_hermitian_with(h_s, policy.hermiticity)?;
        let gap = spec.eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if gap <= policy.degeneracy {
            return Err(Error::DegenerateSpectrum { gap });
        }
        let u = spec.eigenvectors.clone();
        let mut entries = Vec::with_capacity(d * d);
        for r in 0..d {
            for s in 0..d {
                let ur = u.column(r);
                let us = u.column(s);
                let op = &ur * us.adjoint();
                let weights = couplings.iter().map(|a| (ur.adjoint() * a * us)[(0, 0)]).collect();
                entries.push(Eigenoperator { omega: spec.eigenvalues[r] - spec.eigenvalues[s], op, weights });
            }
        }
        Ok(Self { dim: d, energies: spec.eigenvalues, basis: u, entries, labels: couplings.len() })
    }

    /// Eigenoperators of two non-interacting systems embedded as `V ⊗ id` and
    /// `id ⊗ V`. Bath labels of the second system follow those of the first.
    pub fn joint(first: &Self, second: &Self) -> Self {
        let (d1, d2) = (first.dim, second.dim);
        let (n1, n2) = (first.labels, second.labels);
        let mut entries = Vec::with_capacity(first.entries.len() + second.entries.len());
        for e in &first.entries {
            let mut weights = e.weights.clone();
            weights.resize(n1 + n2, ZERO);
            entries.push(Eigenoperator { omega: e.omega, op: kron(&e.op, &linalg::identity(d2)), weights });
        }
        for e in &second.entries {
            let mut weights = vec![ZERO; n1];
            weights.extend_from_slice(&e.weights);
            entries.push(Eigenoperator { omega: e.omega, op: kron(&linalg::identity(d1), &e.op), weights });
        }
        let energies = first.energies.iter().flat_map(|a| second.energies.iter().map(move |b| a + b)).collect();
        Self {
            dim: d1 * d2,
            energies,
            basis: kron(&first.basis, &second.basis),
            entries,
            labels: n1 + n2,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn entries(&self) -> &[Eigenoperator] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Energies of the (joint) system Hamiltonian, in the order of [`Self::basis`].
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Unitary whose columns are the energy eigenvectors.
    pub fn basis(&self) -> &Operator {
        &self.basis
    }

    /// `Σ_j w_ja V_j`, which reproduces coupling operator `a`.
    pub fn reconstruct(&self, label: usize) -> Operator {
        let mut out = linalg::zeros(self.dim);
        for e in &self.entries {
            out += &e.op * e.weights[label];
        }
        out
    }

    /// Entries whose weights are not all negligible.
    fn active(&self) -> Vec<&Eigenoperator> {
        let scale = self.entries.iter().flat_map(|e| e.weights.iter()).fold(0.0f64, |m, w| m.max(w.norm()));
        self.entries
            .iter()
            .filter(|e| e.weights.iter().any(|w| w.norm() > 1e-14 * scale))
            .collect()
    }
}

fn check_labels(es: &EigenoperatorSet, bath: &BathModel) -> Result<()> {
    if es.labels() != bath.labels() {
        return Err(Error::DimensionMismatch(format!(
            "eigenoperator set uses {} coupling labels, bath has {}",
            es.labels(),
            bath.labels()
        )));
    }
    Ok(())
}

fn key(x: f64) -> u64 {
    // Normalizes -0.0 so equal frequencies share a cache slot.
    (x + 0.0).to_bits()
}

/// `Σ_ab x_a y_b L_ab`.
fn bilinear(x: &[C64], y: &[C64], l: &DMatrix<C64>) -> C64 {
    let mut acc = ZERO;
    for (a, xa) in x.iter().enumerate() {
        if *xa == ZERO {
            continue;
        }
        for (b, yb) in y.iter().enumerate() {
            acc += xa * yb * l[(a, b)];
        }
    }
    acc
}

/// Second-order generator for a given bath-label coefficient function
/// `coef(sign, ω) = [F±_ab(ω)]`.
fn k2_with(
    es: &EigenoperatorSet,
    labels: usize,
    coef: impl Fn(Sign, f64) -> Result<DMatrix<C64>>,
) -> Result<Superoperator> {
    let d = es.dim;
    let active = es.active();
    let mut tables: HashMap<u64, (DMatrix<C64>, DMatrix<C64>)> = HashMap::new();
    for e in &active {
        if let std::collections::hash_map::Entry::Vacant(slot) = tables.entry(key(e.omega)) {
            let plus = coef(Sign::Plus, e.omega)?;
            let minus = coef(Sign::Minus, e.omega)?;
            debug_assert_eq!(plus.shape(), (labels, labels));
            slot.insert((plus, minus));
        }
    }
    let mut m = DMatrix::<C64>::zeros(d * d, d * d);
    let id = linalg::identity(d);
    for vj in &active {
        let (plus, minus) = &tables[&key(vj.omega)];
        for vk in &active {
            // Ω̂⁺_kj(ω_j) [V_j ρ, V_k]
            let cp = bilinear(&vk.weights, &vj.weights, plus);
            if cp != ZERO {
                m += kron(&vk.op.transpose(), &vj.op) * cp;
                m -= kron(&id, &(&vk.op * &vj.op)) * cp;
            }
            // Ω̂⁻_jk(ω_j) [V_k, ρ V_j]
            let cm = bilinear(&vj.weights, &vk.weights, minus);
            if cm != ZERO {
                m += kron(&vj.op.transpose(), &vk.op) * cm;
                m -= kron(&(&vj.op * &vk.op).transpose(), &id) * cm;
            }
        }
    }
    Superoperator::new(d, m)
}

fn label_table(n: usize, f: impl Fn(usize, usize) -> Result<C64>) -> Result<DMatrix<C64>> {
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            m[(a, b)] = f(a, b)?;
        }
    }
    Ok(m)
}

/// Markov-limit second-order generator.
pub fn k2_markov(es: &EigenoperatorSet, bath: &BathModel) -> Result<Superoperator> {
    check_labels(es, bath)?;
    let n = bath.labels();
    k2_with(es, n, |sign, w| label_table(n, |a, b| bath.half_fourier(a, b, sign, w)))
}

/// Second-order generator with coefficients integrated over `[0, t]`.
pub fn k2_finite_time(es: &EigenoperatorSet, bath: &BathModel, t: f64) -> Result<Superoperator> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    check_labels(es, bath)?;
    let n = bath.labels();
    k2_with(es, n, |sign, w| label_table(n, |a, b| bath.finite_half_fourier(a, b, sign, w, t)))
}

/// `d/dt K2_t` at `t = 0`: the commutator structure with coefficients `Ω±(0)`.
pub fn k2_initial_rate(es: &EigenoperatorSet, bath: &BathModel) -> Result<Superoperator> {
    check_labels(es, bath)?;
    let n = bath.labels();
    k2_with(es, n, |sign, _| label_table(n, |a, b| bath.correlation(a, b, sign, 0.0)))
}

/// `X ↦ (S[X†])†`.
pub fn hermitian_mirror(s: &Superoperator) -> Superoperator {
    let d = s.dim();
    let swap = |p: usize| (p % d) * d + p / d;
    let src = s.matrix();
    let m = DMatrix::from_fn(d * d, d * d, |p, q| src[(swap(p), swap(q))].conj());
    Superoperator::new(d, m).expect("square by construction")
}

fn k4_single(
    es: &EigenoperatorSet,
    bath: &BathModel,
    term: &dyn FourthOrderTerm,
    transform: &(dyn Fn(&dyn FourthOrderTerm, [f64; 3]) -> Result<C64> + Sync),
) -> Result<Superoperator> {
    let d = es.dim;
    let n = bath.labels();
    let active = es.active();
    let e = active.len();

    let mut lf = vec![0.0; n * n * n * n];
    for (i, slot) in lf.iter_mut().enumerate() {
        let idx = [i / (n * n * n), (i / (n * n)) % n, (i / n) % n, i % n];
        *slot = term.label_factor(bath.mixing(), idx);
    }
    let factor = |j: usize, k: usize, l: usize, m: usize| -> C64 {
        let mut acc = ZERO;
        for (i, &f) in lf.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let (a, b, c, x) = (i / (n * n * n), (i / (n * n)) % n, (i / n) % n, i % n);
            acc += active[j].weights[a] * active[k].weights[b] * active[l].weights[c] * active[m].weights[x] * f;
        }
        acc
    };

    // First pass: surviving tuples and the distinct phase vectors they need.
    let mut tuples = Vec::new();
    let mut deltas: HashMap<[u64; 3], [f64; 3]> = HashMap::new();
    for j in 0..e {
        for k in 0..e {
            for l in 0..e {
                for m in 0..e {
                    let f = factor(j, k, l, m);
                    if f == ZERO {
                        continue;
                    }
                    let omega = [active[j].omega, active[k].omega, active[l].omega, active[m].omega];
                    let delta = term.delta(omega);
                    deltas.insert(delta.map(key), delta);
                    tuples.push(([j, k, l, m], f, delta.map(key)));
                }
            }
        }
    }
    let values: Vec<([u64; 3], Result<C64>)> =
        deltas.par_iter().map(|(k, delta)| (*k, transform(term, *delta))).collect();
    let mut table = HashMap::with_capacity(values.len());
    for (k, v) in values {
        table.insert(k, v?);
    }

    let zero = || DMatrix::<C64>::zeros(d * d, d * d);
    let total = tuples
        .par_iter()
        .fold(zero, |mut acc, ([j, k, l, m], f, dk)| {
            let c = f * table[dk];
            if c != ZERO {
                if let Some(op) = term.operator([&active[*j].op, &active[*k].op, &active[*l].op, &active[*m].op]) {
                    acc += op.matrix() * c;
                }
            }
            acc
        })
        .reduce(zero, |a, b| a + b);
    Superoperator::new(d, total)
}

fn k4_with(
    es: &EigenoperatorSet,
    bath: &BathModel,
    registry: &TermRegistry,
    terms: &[TermId],
    transform: &(dyn Fn(&dyn FourthOrderTerm, [f64; 3]) -> Result<C64> + Sync),
) -> Result<Superoperator> {
    check_labels(es, bath)?;
    let mut cache: HashMap<TermId, Superoperator> = HashMap::new();
    let mut total = Superoperator::zero(es.dim);
    for &id in terms {
        let term = registry.get(id)?;
        let (source, mirrored) = match term.mirror_of() {
            Some(q) => (q, true),
            None => (id, false),
        };
        if !cache.contains_key(&source) {
            let base = registry.get(source)?;
            if base.mirror_of().is_some() {
                return Err(Error::UnregisteredTerm(format!("{id} mirrors another mirror")));
            }
            cache.insert(source, k4_single(es, bath, base.as_ref(), transform)?);
        }
        let s = &cache[&source];
        if mirrored {
            total += &hermitian_mirror(s);
        } else {
            total += s;
        }
    }
    Ok(total)
}

/// Markov-limit fourth-order generator `Σ_p Σ Ω̂^(p)(Δ) D^(p)`.
pub fn k4_markov(
    es: &EigenoperatorSet,
    bath: &BathModel,
    registry: &TermRegistry,
    terms: &[TermId],
) -> Result<Superoperator> {
    k4_with(es, bath, registry, terms, &|term, delta| term.base_transform(bath, delta))
}

/// Fourth-order generator with kernels integrated over the simplex
/// `t1 + t2 + t3 ≤ t`.
pub fn k4_finite_time(
    es: &EigenoperatorSet,
    bath: &BathModel,
    registry: &TermRegistry,
    terms: &[TermId],
    t: f64,
) -> Result<Superoperator> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    for &id in terms {
        registry.get(id)?;
    }
    if t == 0.0 {
        return Ok(Superoperator::zero(es.dim));
    }
    k4_with(es, bath, registry, terms, &|term, delta| term.base_finite_transform(bath, delta, t))
}

/// Keeps only the matrix elements of `k` that preserve Bohr frequency in the
/// energy basis of `es`: `|c⟩⟨d| ↦ |a⟩⟨b|` survives when
/// `ε_a - ε_b = ε_c - ε_d` within the policy's secular tolerance.
pub fn secularize(k: &Superoperator, es: &EigenoperatorSet) -> Superoperator {
    secularize_with(k, es, NumericPolicy::DEFAULT.secular)
}

pub fn secularize_with(k: &Superoperator, es: &EigenoperatorSet, tol: f64) -> Superoperator {
    let d = es.dim;
    let u = es.basis();
    // vec(U† X U) = (U^T ⊗ U†) vec(X)
    let w = kron(&u.transpose(), &u.adjoint());
    let mut in_basis = &w * k.matrix() * w.adjoint();
    let e = es.energies();
    let bohr = |p: usize| e[p % d] - e[p / d];
    for q in 0..d * d {
        for p in 0..d * d {
            if (bohr(p) - bohr(q)).abs() > tol {
                in_basis[(p, q)] = ZERO;
            }
        }
    }
    Superoperator::new(d, w.adjoint() * in_basis * w).expect("square by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Redfield,
    DaviesSecular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Markov {
    /// Coefficients integrated to infinity.
    Infinite,
    /// Coefficients integrated over `[0, t]`.
    Finite { t: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorOptions {
    pub lambda: f64,
    pub order: u8,
    pub flavor: Flavor,
    pub markov: Markov,
    pub terms: Vec<TermId>,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            order: 2,
            flavor: Flavor::Redfield,
            markov: Markov::Infinite,
            terms: TermRegistry::default_terms(),
        }
    }
}

/// Where one generator component came from.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub component: String,
    pub source: String,
    pub frobenius_norm: f64,
}

/// Everything needed to rebuild the generator at any time.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    h_s: Operator,
    es: EigenoperatorSet,
    bath: BathModel,
    registry: TermRegistry,
    options: GeneratorOptions,
}

#[derive(Debug, Clone)]
pub struct GeneratorReport {
    pub l0: Superoperator,
    pub k2: Superoperator,
    pub k4: Superoperator,
    pub lambda: f64,
    pub order: u8,
    pub flavor: Flavor,
    pub markov: Markov,
    pub terms: Vec<TermId>,
    pub provenance: Vec<Provenance>,
    model: Arc<GeneratorModel>,
}

impl GeneratorModel {
    pub fn new(
        h_s: Operator,
        es: EigenoperatorSet,
        bath: BathModel,
        registry: TermRegistry,
        options: GeneratorOptions,
    ) -> Result<Self> {
        if h_s.shape() != (es.dim(), es.dim()) {
            return Err(Error::DimensionMismatch("system Hamiltonian and eigenoperators differ in dimension".into()));
        }
        check_labels(&es, &bath)?;
        if options.order != 2 && options.order != 4 {
            return Err(Error::InvalidParameter(format!("order must be 2 or 4, got {}", options.order)));
        }
        if !options.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        if let Markov::Finite { t } = options.markov {
            if t < 0.0 || t.is_nan() {
                return Err(Error::NegativeTime(t));
            }
        }
        if options.order == 4 {
            for &id in &options.terms {
                registry.get(id)?;
            }
        }
        Ok(Self { h_s, es, bath, registry, options })
    }

    pub fn options(&self) -> &GeneratorOptions {
        &self.options
    }

    pub fn eigenoperators(&self) -> &EigenoperatorSet {
        &self.es
    }

    pub fn bath(&self) -> &BathModel {
        &self.bath
    }

    fn components(&self, markov: Markov) -> Result<(Superoperator, Superoperator, Superoperator, Vec<Provenance>)> {
        let o = &self.options;
        let l0 = Superoperator::hamiltonian(&self.h_s);
        let (mut k2, k2_src) = match markov {
            Markov::Infinite => (k2_markov(&self.es, &self.bath)?, "second order, Markov limit".to_string()),
            Markov::Finite { t } => {
                (k2_finite_time(&self.es, &self.bath, t)?, format!("second order, coefficients integrated to t = {t}"))
            }
        };
        let (mut k4, k4_src) = if o.order == 4 {
            let names: Vec<String> = o.terms.iter().map(|t| t.to_string()).collect();
            match markov {
                Markov::Infinite => (
                    k4_markov(&self.es, &self.bath, &self.registry, &o.terms)?,
                    format!("fourth order, Markov limit, terms [{}]", names.join(", ")),
                ),
                Markov::Finite { t } => (
                    k4_finite_time(&self.es, &self.bath, &self.registry, &o.terms, t)?,
                    format!("fourth order, simplex integral to t = {t}, terms [{}]", names.join(", ")),
                ),
            }
        } else {
            (Superoperator::zero(self.es.dim()), "not included (order 2)".to_string())
        };
        let mut suffix = "";
        if o.flavor == Flavor::DaviesSecular {
            k2 = secularize(&k2, &self.es);
            k4 = secularize(&k4, &self.es);
            suffix = ", secularized";
        }
        let provenance = vec![
            Provenance {
                component: "L0".into(),
                source: "-i[H_S, .]".into(),
                frobenius_norm: l0.frobenius_norm(),
            },
            Provenance { component: "K2".into(), source: format!("{k2_src}{suffix}"), frobenius_norm: k2.frobenius_norm() },
            Provenance {
                component: "K4".into(),
                source: if o.order == 4 { format!("{k4_src}{suffix}") } else { k4_src },
                frobenius_norm: k4.frobenius_norm(),
            },
        ];
        Ok((l0, k2, k4, provenance))
    }

    /// Full generator `L0 + λ²K2_t + λ⁴K4_t` at time `t` (finite-time coefficients).
    pub fn generator_at(&self, t: f64) -> Result<Superoperator> {
        let (l0, k2, k4, _) = self.components(Markov::Finite { t })?;
        Ok(self.combine(&l0, &k2, &k4))
    }

    fn combine(&self, l0: &Superoperator, k2: &Superoperator, k4: &Superoperator) -> Superoperator {
        let l2 = self.options.lambda.powi(2);
        let mut l = l0 + &(k2 * l2);
        if self.options.order == 4 {
            l += &(k4 * (l2 * l2));
        }
        l
    }

    pub fn assemble(self) -> Result<GeneratorReport> {
        let markov = self.options.markov;
        let (l0, k2, k4, provenance) = self.components(markov)?;
        let o = &self.options;
        Ok(GeneratorReport {
            l0,
            k2,
            k4,
            lambda: o.lambda,
            order: o.order,
            flavor: o.flavor,
            markov,
            terms: if o.order == 4 { o.terms.clone() } else { Vec::new() },
            provenance,
            model: Arc::new(self),
        })
    }
}

/// Builds the generator report with the standard fourth-order registry.
pub fn assemble(
    h_s: &Operator,
    es: &EigenoperatorSet,
    bath: &BathModel,
    options: GeneratorOptions,
) -> Result<GeneratorReport> {
    GeneratorModel::new(h_s.clone(), es.clone(), bath.clone(), TermRegistry::standard(), options)?.assemble()
}

impl GeneratorReport {
    /// `L = L0 + λ²K2 (+ λ⁴K4)`.
    pub fn generator(&self) -> Superoperator {
        self.model.combine(&self.l0, &self.k2, &self.k4)
    }

    pub fn model(&self) -> &GeneratorModel {
        &self.model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Exponential for Markov-limit generators, Runge–Kutta for finite-time ones.
    Auto,
    /// `expm(t L)` of the report's fixed generator.
    Exponential,
    /// Dormand–Prince with local error 1e-9; time-dependent for finite-time reports.
    RungeKutta,
}

/// States along a trajectory. States are kept as plain operators since a
/// non-CP generator may drive them out of the state space; that shows up in
/// the eigenvalues rather than as an error.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Operator>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub traces: Vec<C64>,
}

impl Trajectory {
    fn from_states(times: &[f64], states: Vec<Operator>) -> Result<Self> {
        let mut eigenvalues = Vec::with_capacity(states.len());
        let mut traces = Vec::with_capacity(states.len());
        for s in &states {
            let herm = (s + s.adjoint()) * c64(0.5, 0.0);
            eigenvalues.push(linalg::eigvalsh(&herm)?);
            traces.push(linalg::trace(s));
        }
        Ok(Self { times: times.to_vec(), states, eigenvalues, traces })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_trace_error(&self) -> f64 {
        self.traces.iter().map(|t| (t - c64(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }
}

pub fn evolve(report: &GeneratorReport, rho0: &DensityMatrix, times: &[f64]) -> Result<Trajectory> {
    evolve_with(report, rho0, times, Integrator::Auto)
}

pub fn evolve_with(
    report: &GeneratorReport,
    rho0: &DensityMatrix,
    times: &[f64],
    integrator: Integrator,
) -> Result<Trajectory> {
    let d = report.l0.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch(format!("state has dimension {}, generator acts on {d}", rho0.dim())));
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter("time grid is empty".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidParameter(format!("time grid must start at 0, starts at {}", times[0])));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be strictly ascending".into()));
    }
    let v0 = linalg::vec_op(rho0.as_operator());
    let integrator = match (integrator, report.markov) {
        (Integrator::Auto, Markov::Infinite) => Integrator::Exponential,
        (Integrator::Auto, Markov::Finite { .. }) => Integrator::RungeKutta,
        (other, _) => other,
    };
    let states: Vec<Operator> = match integrator {
        Integrator::Exponential => {
            let l = report.generator();
            let mut out = Vec::with_capacity(times.len());
            let mut prev_t = 0.0;
            let mut v = v0.clone();
            for &t in times {
                // Direct exponentials while the norm allows, else chained steps.
                let direct = l.exp(t);
                v = match direct {
                    Ok(p) => p.matrix() * &v0,
                    Err(Error::Overflow { .. }) => l.exp(t - prev_t)?.matrix() * &v,
                    Err(e) => return Err(e),
                };
                prev_t = t;
                out.push(linalg::unvec(&v, d));
            }
            out
        }
        Integrator::RungeKutta | Integrator::Auto => {
            let opts = OdeOptions { rtol: 1e-10, atol: 1e-10, ..OdeOptions::default() };
            let ys: Vec<DVector<C64>> = match report.markov {
                Markov::Infinite => {
                    let l = report.generator();
                    ode::dopri45(|_, y| Ok(l.matrix() * y), v0, times, opts)?
                }
                Markov::Finite { .. } => {
                    let model = report.model.clone();
                    ode::dopri45(|t, y| Ok(model.generator_at(t)?.matrix() * y), v0, times, opts)?
                }
            };
            ys.iter().map(|y| linalg::unvec(y, d)).collect()
        }
    };
    Trajectory::from_states(times, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli_x, pauli_z};
    use approx::assert_abs_diff_eq;

    fn two_level(w0: f64) -> Operator {
        pauli_z() * c64(w0 / 2.0, 0.0)
    }

    #[test]
    fn two_level_eigenoperators() {
        let es = EigenoperatorSet::new(&two_level(1.0), &[pauli_x()]).unwrap();
        assert_eq!(es.len(), 4);
        let mut omegas: Vec<f64> = es.entries().iter().map(|e| e.omega).collect();
        omegas.sort_by(f64::total_cmp);
        assert_eq!(omegas, vec![-1.0, 0.0, 0.0, 1.0]);
        for e in es.entries() {
            let w = e.weights[0].norm();
            if e.omega == 0.0 {
                assert!(w < 1e-15);
            } else {
                assert_abs_diff_eq!(w, 1.0, epsilon = 1e-15);
            }
        }
        assert!((es.reconstruct(0) - pauli_x()).norm() < 1e-12);
    }

    #[test]
    fn three_level_frequencies() {
        let h = linalg::diag(&[0.0, 1.0, 3.0]);
        let es = EigenoperatorSet::new(&h, &[]).unwrap();
        let mut omegas: Vec<f64> = es.entries().iter().map(|e| e.omega).collect();
        omegas.sort_by(f64::total_cmp);
        // Enumeration over (r, s): gaps 1 and 2 give ±1, ±2, ±3.
        assert_eq!(omegas, vec![-3.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn degenerate_spectrum_rejected() {
        let err = EigenoperatorSet::new(&linalg::identity(2), &[pauli_x()]).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { .. }));
    }

    #[test]
    fn zero_bath_gives_zero_generators() {
        let es = EigenoperatorSet::new(&two_level(1.0), &[pauli_x()]).unwrap();
        let bath = BathModel::exponential(1.0, 0.0, 1.0).unwrap();
        assert_eq!(k2_markov(&es, &bath).unwrap().frobenius_norm(), 0.0);
        let k4 = k4_markov(&es, &bath, &TermRegistry::standard(), &TermRegistry::default_terms()).unwrap();
        assert_eq!(k4.frobenius_norm(), 0.0);
    }

    #[test]
    fn finite_time_zero_is_zero() {
        let es = EigenoperatorSet::new(&two_level(1.0), &[pauli_x()]).unwrap();
        let bath = BathModel::exponential(1.0, 0.8, 1.0).unwrap();
        assert!(k2_finite_time(&es, &bath, 0.0).unwrap().frobenius_norm() < 1e-15);
        let reg = TermRegistry::standard();
        assert_eq!(k4_finite_time(&es, &bath, &reg, &[TermId::P1], 0.0).unwrap().frobenius_norm(), 0.0);
        assert!(matches!(k2_finite_time(&es, &bath, -1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn unregistered_term_is_an_error() {
        let es = EigenoperatorSet::new(&two_level(1.0), &[pauli_x()]).unwrap();
        let bath = BathModel::exponential(1.0, 0.8, 1.0).unwrap();
        let err = k4_markov(&es, &bath, &TermRegistry::standard(), &[TermId { p: 3, adjoint: false }]).unwrap_err();
        assert_eq!(err, Error::UnregisteredTerm("3".into()));
    }

    #[test]
    fn mirror_is_an_involution_and_fixes_hermitian_maps() {
        let es = EigenoperatorSet::new(&two_level(1.3), &[pauli_x()]).unwrap();
        let bath = BathModel::exponential(1.0, 0.8, 1.0).unwrap();
        let k2 = k2_markov(&es, &bath).unwrap();
        assert!((hermitian_mirror(&k2).matrix() - k2.matrix()).norm() < 1e-12);
        let p1 = k4_markov(&es, &bath, &TermRegistry::standard(), &[TermId::P1]).unwrap();
        assert!((hermitian_mirror(&hermitian_mirror(&p1)).matrix() - p1.matrix()).norm() == 0.0);
        // The literal p = 1 term alone does not preserve hermiticity.
        assert!(p1.hermiticity_preservation_error() > 1e-3);
    }

    #[test]
    fn lambda_zero_is_free_precession() {
        let w0 = 1.7;
        let h = two_level(w0);
        let es = EigenoperatorSet::new(&h, &[pauli_x()]).unwrap();
        let bath = BathModel::exponential(1.0, 0.8, 1.0).unwrap();
        let report = assemble(&h, &es, &bath, GeneratorOptions { lambda: 0.0, ..Default::default() }).unwrap();
        assert!((report.generator().matrix() - report.l0.matrix()).norm() == 0.0);
        let plus = DensityMatrix::from_operator(linalg::from_real_rows(2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        let traj = evolve(&report, &plus, &[0.0, 0.3, 1.0, 2.5]).unwrap();
        assert!((&traj.states[0] - plus.as_operator()).norm() < 1e-15);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            // ρ_01(t) = e^{-i ω0 t}/2 for H = ω0 σz / 2 with |0⟩ the upper level.
            let want = C64::from_polar(0.5, -w0 * t);
            assert!((s[(0, 1)] - want).norm() < 1e-12, "t={t}");
            assert_abs_diff_eq!(s[(0, 0)].re, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn bad_time_grids_rejected() {
        let h = two_level(1.0);
        let es = EigenoperatorSet::new(&h, &[pauli_x()]).unwrap();
        let bath = BathModel::exponential(1.0, 0.8, 1.0).unwrap();
        let report = assemble(&h, &es, &bath, GeneratorOptions::default()).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(evolve(&report, &rho, &[]).is_err());
        assert!(evolve(&report, &rho, &[0.5, 1.0]).is_err());
        assert!(evolve(&report, &rho, &[0.0, 1.0, 1.0]).is_err());
    }
}

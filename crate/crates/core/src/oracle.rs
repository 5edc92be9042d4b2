//! Exact reference dynamics with a finite bosonic bath.
//!
//! The bath is a handful of truncated harmonic modes with
//! `H_R = Σ_m ω_m b_m† b_m`. The system couples either through a Hermitian
//! operator, `H_SR = A ⊗ Σ_m g_m (b_m + b_m†)`, or in rotating form,
//! `H_SR = Σ_m g_m (L† ⊗ b_m + L ⊗ b_m†)`. The total state is evolved
//! exactly, so every quantity here is free of weak-coupling assumptions.
//!
//! Dyson terms are expressed in the interaction picture with respect to
//! `H_S + H_R`; everything else is in the Schrödinger picture.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bath::BathModel;
use crate::channels::Superoperator;
use crate::error::{Error, Result};
use crate::generators::{assemble, evolve, EigenoperatorSet, Flavor, GeneratorOptions, Markov};
use crate::linalg::{self, c64, kron, DensityMatrix, Operator, C64, ZERO};
use crate::ode::{self, OdeOptions};

/// Largest total dimension `exact_reduced` will diagonalize by default.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;
/// Thermal weight allowed beyond the Fock cutoff of each mode.
pub const THERMAL_TAIL: f64 = 1e-6;
/// Top-level population above which a truncation warning is recorded.
pub const TRUNCATION_WARNING: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mode {
    pub frequency: f64,
    pub coupling: f64,
    /// Highest Fock level kept.
    pub cutoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteBath {
    modes: Vec<Mode>,
    /// Inverse temperature; `f64::INFINITY` is the vacuum.
    beta: f64,
}

fn annihilation(cutoff: usize) -> Operator {
    let n = cutoff + 1;
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { c64((j as f64).sqrt(), 0.0) } else { ZERO })
}

fn coth(x: f64) -> f64 {
    if x > 40.0 {
        1.0
    } else {
        1.0 / x.tanh()
    }
}

impl FiniteBath {
    pub fn new(modes: Vec<Mode>, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if modes.is_empty() {
            return Err(Error::InvalidParameter("finite bath needs at least one mode".into()));
        }
        for (m, mode) in modes.iter().enumerate() {
            if !(mode.frequency > 0.0 && mode.frequency.is_finite()) || !mode.coupling.is_finite() || mode.cutoff == 0 {
                return Err(Error::InvalidParameter(format!("mode {m} is malformed: {mode:?}")));
            }
            // Geometric thermal distribution: weight beyond level n is e^{-βω(n+1)}.
            let tail = (-beta * mode.frequency * (mode.cutoff + 1) as f64).exp();
            if tail > THERMAL_TAIL {
                return Err(Error::InvalidParameter(format!(
                    "mode {m}: thermal weight {tail:e} beyond Fock cutoff {} exceeds {THERMAL_TAIL:e}",
                    mode.cutoff
                )));
            }
        }
        Ok(Self { modes, beta })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.modes.iter().map(|m| m.cutoff + 1).product()
    }

    /// Same modes with every coupling set to zero.
    pub fn decoupled(&self) -> Self {
        let modes = self.modes.iter().map(|m| Mode { coupling: 0.0, ..*m }).collect();
        Self { modes, beta: self.beta }
    }

    /// Embeds a single-mode operator into the full bath space.
    fn embed(&self, m: usize, op: &Operator) -> Operator {
        let mut out = linalg::identity(1);
        for (k, mode) in self.modes.iter().enumerate() {
            let factor = if k == m { op.clone() } else { linalg::identity(mode.cutoff + 1) };
            out = kron(&out, &factor);
        }
        out
    }

    pub fn hamiltonian(&self) -> Operator {
        let mut h = linalg::zeros(self.dim());
        for (m, mode) in self.modes.iter().enumerate() {
            let b = annihilation(mode.cutoff);
            h += self.embed(m, &(b.adjoint() * &b)) * c64(mode.frequency, 0.0);
        }
        h
    }

    /// `Σ_m g_m b_m`.
    pub fn lowering(&self) -> Operator {
        let mut out = linalg::zeros(self.dim());
        for (m, mode) in self.modes.iter().enumerate() {
            out += self.embed(m, &annihilation(mode.cutoff)) * c64(mode.coupling, 0.0);
        }
        out
    }

    /// `Σ_m g_m (b_m + b_m†)`.
    pub fn coupling_operator(&self) -> Operator {
        let b = self.lowering();
        &b + b.adjoint()
    }

    fn mode_state(&self, mode: &Mode) -> Operator {
        let n = mode.cutoff + 1;
        let w: Vec<f64> = (0..n)
            .map(|k| if self.beta.is_infinite() { if k == 0 { 1.0 } else { 0.0 } } else { (-self.beta * mode.frequency * k as f64).exp() })
            .collect();
        let z: f64 = w.iter().sum();
        linalg::diag(&w.iter().map(|x| x / z).collect::<Vec<_>>())
    }

    /// Truncated thermal state, a product over modes.
    pub fn thermal_state(&self) -> DensityMatrix {
        let mut out = linalg::identity(1);
        for mode in &self.modes {
            out = kron(&out, &self.mode_state(mode));
        }
        DensityMatrix::from_operator(out).expect("thermal state is valid")
    }

    /// `⟨B(t) B⟩` for `B = Σ g_m (b_m + b_m†)` with untruncated modes:
    /// `Σ_m g_m² [coth(βω_m/2) cos ω_m t - i sin ω_m t]`.
    pub fn correlation(&self, t: f64) -> C64 {
        self.modes
            .iter()
            .map(|m| {
                let (s, c) = (m.frequency * t).sin_cos();
                c64(m.coupling * m.coupling * coth(self.beta * m.frequency / 2.0) * c, -m.coupling * m.coupling * s)
            })
            .sum()
    }

    /// `⟨B(t) B⟩` evaluated with the truncated operators the oracle actually uses.
    pub fn truncated_correlation(&self, t: f64) -> C64 {
        self.modes
            .iter()
            .map(|m| {
                let b = annihilation(m.cutoff);
                let x = &b + b.adjoint();
                let n = m.cutoff + 1;
                let phase = DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        C64::from_polar(1.0, m.frequency * i as f64 * t)
                    } else {
                        ZERO
                    }
                });
                let xt = &phase * &x * phase.adjoint();
                linalg::trace(&(self.mode_state(m) * xt * &x)) * (m.coupling * m.coupling)
            })
            .sum()
    }

    /// `2π / (smallest spacing between mode frequencies, or the lowest frequency)`.
    pub fn recurrence_time(&self) -> f64 {
        let mut f: Vec<f64> = self.modes.iter().map(|m| m.frequency).collect();
        f.sort_by(f64::total_cmp);
        let mut gap = f[0];
        for w in f.windows(2) {
            if w[1] - w[0] > 1e-12 {
                gap = gap.min(w[1] - w[0]);
            }
        }
        2.0 * std::f64::consts::PI / gap
    }
}

/// How the system couples to the finite bath.
#[derive(Debug, Clone)]
pub enum Interaction {
    /// `A ⊗ Σ g_m (b_m + b_m†)` with Hermitian `A`.
    Hermitian(Operator),
    /// `Σ g_m (L† ⊗ b_m + L ⊗ b_m†)`.
    Rotating(Operator),
}

#[derive(Debug, Clone)]
pub struct OracleSystem {
    pub h_s: Operator,
    pub interaction: Interaction,
}

impl OracleSystem {
    pub fn new(h_s: Operator, interaction: Interaction) -> Result<Self> {
        let d = h_s.nrows();
        if !linalg::is_hermitian(&h_s, 1e-12) {
            return Err(Error::NotHermitian(linalg::hermiticity_error(&h_s)));
        }
        let op = match &interaction {
            Interaction::Hermitian(a) => {
                if !linalg::is_hermitian(a, 1e-12) {
                    return Err(Error::NotHermitian(linalg::hermiticity_error(a)));
                }
                a
            }
            Interaction::Rotating(l) => l,
        };
        if op.shape() != (d, d) {
            return Err(Error::DimensionMismatch("coupling operator and H_S differ in dimension".into()));
        }
        Ok(Self { h_s, interaction })
    }

    pub fn dim(&self) -> usize {
        self.h_s.nrows()
    }

    /// `(H_S ⊗ id + id ⊗ H_R, H_SR)` on the full space.
    fn hamiltonians(&self, bath: &FiniteBath) -> (Operator, Operator) {
        let d = self.dim();
        let h0 = kron(&self.h_s, &linalg::identity(bath.dim())) + kron(&linalg::identity(d), &bath.hamiltonian());
        let hsr = match &self.interaction {
            Interaction::Hermitian(a) => kron(a, &bath.coupling_operator()),
            Interaction::Rotating(l) => {
                let b = bath.lowering();
                let x = kron(&l.adjoint(), &b);
                &x + x.adjoint()
            }
        };
        (h0, hsr)
    }
}

#[derive(Debug, Clone)]
pub struct ExactTrajectory {
    pub times: Vec<f64>,
    pub system: Vec<Operator>,
    pub bath: Vec<Operator>,
    /// `Tr ρ²` of the full state; conserved by unitary evolution.
    pub full_purity: Vec<f64>,
    /// Largest population of any mode's top Fock level.
    pub top_level_population: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn exact_reduced(
    sys: &OracleSystem,
    bath: &FiniteBath,
    lambda: f64,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<ExactTrajectory> {
    exact_reduced_with_cap(sys, bath, lambda, rho0, times, DEFAULT_DIMENSION_CAP)
}

pub fn exact_reduced_with_cap(
    sys: &OracleSystem,
    bath: &FiniteBath,
    lambda: f64,
    rho0: &DensityMatrix,
    times: &[f64],
    cap: usize,
) -> Result<ExactTrajectory> {
    let d = sys.dim();
    let dr = bath.dim();
    let dim = d * dr;
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch(format!("state has dimension {}, system has {d}", rho0.dim())));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidParameter("times must be non-negative and ascending".into()));
    }
    let (h0, hsr) = sys.hamiltonians(bath);
    let h = h0 + hsr * c64(lambda, 0.0);
    let spec = linalg::eig_hermitian(&h)?;
    let v = &spec.eigenvectors;
    let rho_full = kron(rho0.as_operator(), bath.thermal_state().as_operator());
    let rho_e = v.adjoint() * rho_full * v;
    let e = &spec.eigenvalues;

    let mut out = ExactTrajectory {
        times: times.to_vec(),
        system: Vec::with_capacity(times.len()),
        bath: Vec::with_capacity(times.len()),
        full_purity: Vec::with_capacity(times.len()),
        top_level_population: Vec::with_capacity(times.len()),
        warnings: Vec::new(),
    };
    let top_projectors: Vec<Operator> = bath
        .modes()
        .iter()
        .enumerate()
        .map(|(m, mode)| {
            let p = linalg::basis_matrix(mode.cutoff + 1, mode.cutoff, mode.cutoff);
            bath.embed(m, &p)
        })
        .collect();
    for &t in times {
        let phases: Vec<C64> = e.iter().map(|&x| C64::from_polar(1.0, -x * t)).collect();
        let rho_t_e = DMatrix::from_fn(dim, dim, |a, b| rho_e[(a, b)] * phases[a] * phases[b].conj());
        let rho_t = v * rho_t_e * v.adjoint();
        let system = linalg::partial_trace(&rho_t, (d, dr), linalg::Keep::First)?;
        let reduced_bath = linalg::partial_trace(&rho_t, (d, dr), linalg::Keep::Second)?;
        let top = top_projectors.iter().map(|p| linalg::trace(&(p * &reduced_bath)).re).fold(0.0, f64::max);
        if top > TRUNCATION_WARNING {
            out.warnings.push(format!("t = {t}: top Fock level population {top:.3e} exceeds {TRUNCATION_WARNING:e}"));
        }
        out.full_purity.push(linalg::trace(&(&rho_t * &rho_t)).re);
        out.top_level_population.push(top);
        out.system.push(system);
        out.bath.push(reduced_bath);
    }
    Ok(out)
}

/// A P-projected Dyson term of the reduced interaction-picture dynamics.
#[derive(Debug, Clone)]
pub struct DysonTerm {
    pub order: usize,
    pub time: f64,
    pub value: Superoperator,
}

/// `ρ ↦ Tr_R ∫_{t > t1 > … > tn > 0} L(t1) ⋯ L(tn) [ρ ⊗ ρ_R]` with
/// `L(s) = -i[H̃_SR(s), ·]`, the coefficient of `λⁿ` in the reduced
/// interaction-picture state.
pub fn dyson_term(sys: &OracleSystem, bath: &FiniteBath, n: usize, t: f64) -> Result<DysonTerm> {
    if !(1..=4).contains(&n) {
        return Err(Error::InvalidParameter(format!("Dyson order must be 1..=4, got {n}")));
    }
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let d = sys.dim();
    let dr = bath.dim();
    let dim = d * dr;
    if dim > DEFAULT_DIMENSION_CAP {
        return Err(Error::DimensionCap { dim, cap: DEFAULT_DIMENSION_CAP });
    }
    if t == 0.0 {
        return Ok(DysonTerm { order: n, time: t, value: Superoperator::zero(d) });
    }
    let (h0, hsr) = sys.hamiltonians(bath);
    let spec = linalg::eig_hermitian(&h0)?;
    let v = spec.eigenvectors.clone();
    let e = spec.eigenvalues.clone();
    // Everything below lives in the eigenbasis of H0, where the interaction
    // picture is a phase per matrix element.
    let hsr_e = v.adjoint() * hsr * &v;
    let rho_r = bath.thermal_state().into_operator();
    let h_tilde = |s: f64| DMatrix::from_fn(dim, dim, |a, b| hsr_e[(a, b)] * C64::from_polar(1.0, (e[a] - e[b]) * s));

    let opts = OdeOptions { rtol: 1e-11, atol: 1e-30, initial_step: t / 64.0, ..OdeOptions::default() };
    let mut columns = DMatrix::<C64>::zeros(d * d, d * d);
    let block = dim * dim;
    for j in 0..d {
        for i in 0..d {
            let x0 = v.adjoint() * kron(&linalg::basis_matrix(d, i, j), &rho_r) * &v;
            // Levels y_1..y_n, with y_k' = L(s) y_{k-1} and y_0 = x0.
            let rhs = |s: f64, y: &DVector<C64>| -> Result<DVector<C64>> {
                let h = h_tilde(s);
                let mut out = DVector::zeros(n * block);
                for k in 0..n {
                    let prev = if k == 0 {
                        x0.clone()
                    } else {
                        DMatrix::from_column_slice(dim, dim, &y.as_slice()[(k - 1) * block..k * block])
                    };
                    let val = (&h * &prev - &prev * &h) * c64(0.0, -1.0);
                    out.as_mut_slice()[k * block..(k + 1) * block].copy_from_slice(val.as_slice());
                }
                Ok(out)
            };
            let ys = ode::dopri45(rhs, DVector::zeros(n * block), &[0.0, t], opts)?;
            let last = &ys[1];
            let yn_e = DMatrix::from_column_slice(dim, dim, &last.as_slice()[(n - 1) * block..n * block]);
            let yn = &v * yn_e * v.adjoint();
            let reduced = linalg::partial_trace(&yn, (d, dr), linalg::Keep::First)?;
            columns.set_column(i + d * j, &linalg::vec_op(&reduced));
        }
    }
    Ok(DysonTerm { order: n, time: t, value: Superoperator::new(d, columns)? })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub bath: FiniteBath,
    /// `max_t |C_fit(t) - C(t)| / |C(0)|` over the fit window.
    pub residual: f64,
    pub window: f64,
}

struct FitProblem {
    times: Vec<f64>,
    target: Vec<C64>,
    beta: f64,
    min_frequency: f64,
}

impl FitProblem {
    fn frequencies(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| self.min_frequency + x.abs()).collect()
    }

    /// Non-negative least squares for the squared couplings, exact for a few
    /// modes by enumerating active sets.
    fn amplitudes(&self, freqs: &[f64]) -> (Vec<f64>, f64) {
        let n = freqs.len();
        let rows = 2 * self.times.len();
        let design = DMatrix::from_fn(rows, n, |r, m| {
            let t = self.times[r % self.times.len()];
            let w = freqs[m];
            if r < self.times.len() {
                coth(self.beta * w / 2.0) * (w * t).cos()
            } else {
                -(w * t).sin()
            }
        });
        let rhs = DVector::from_fn(rows, |r, _| {
            let c = self.target[r % self.times.len()];
            if r < self.times.len() {
                c.re
            } else {
                c.im
            }
        });
        let mut best = (vec![0.0; n], rhs.norm_squared());
        for mask in 1u32..(1 << n) {
            let cols: Vec<usize> = (0..n).filter(|m| mask & (1 << m) != 0).collect();
            let a = DMatrix::from_fn(rows, cols.len(), |r, c| design[(r, cols[c])]);
            let Ok(x) = a.clone().svd(true, true).solve(&rhs, 1e-12) else { continue };
            if x.iter().any(|v| *v < 0.0) {
                continue;
            }
            let res = (&a * &x - &rhs).norm_squared();
            if res < best.1 {
                let mut full = vec![0.0; n];
                for (c, &m) in cols.iter().enumerate() {
                    full[m] = x[c];
                }
                best = (full, res);
            }
        }
        best
    }
}

impl CostFunction for FitProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.amplitudes(&self.frequencies(p)).1)
    }
}

/// Least-squares fit of `modes` thermal oscillators to the correlation of
/// `model` on `[0, window_factor · τ_R]`. Mode frequencies are kept above
/// the value at which the Fock cutoff still holds the thermal tail.
pub fn fit_bath(model: &BathModel, modes: usize, cutoff: usize, window_factor: f64) -> Result<FitReport> {
    if modes == 0 || modes > 6 || cutoff == 0 {
        return Err(Error::InvalidParameter(format!("fit needs 1..=6 modes and a positive cutoff, got {modes}, {cutoff}")));
    }
    let window = window_factor * model.correlation_time();
    let samples = 201;
    let times: Vec<f64> = (0..samples).map(|i| window * i as f64 / (samples - 1) as f64).collect();
    let target = times.iter().map(|&t| model.base_correlation(t)).collect::<Result<Vec<C64>>>()?;
    let beta = model.beta();
    let min_frequency = -THERMAL_TAIL.ln() / (beta * (cutoff + 1) as f64) * (1.0 + 1e-9);
    let problem = FitProblem { times, target, beta, min_frequency };
    let scale = 1.0 / model.correlation_time();

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in 0..4 {
        let base: Vec<f64> = (0..modes).map(|m| scale * (0.3 + m as f64) * (1.0 + 0.5 * start as f64)).collect();
        let mut simplex = vec![base.clone()];
        for k in 0..modes {
            let mut v = base.clone();
            v[k] += 0.25 * scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| Error::InvalidParameter(format!("fit setup: {e}")))?;
        let res = Executor::new(&problem, solver)
            .configure(|s| s.max_iters(3000))
            .run()
            .map_err(|e| Error::InvalidParameter(format!("fit failed: {e}")))?;
        let param = res.state().get_best_param().cloned().unwrap_or(base);
        let cost = res.state().get_best_cost();
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((param, cost));
        }
    }
    let (param, _) = best.expect("at least one start");
    let freqs = problem.frequencies(&param);
    let (g2, _) = problem.amplitudes(&freqs);
    let bath = FiniteBath::new(
        freqs.iter().zip(&g2).map(|(&frequency, &g)| Mode { frequency, coupling: g.sqrt(), cutoff }).collect(),
        beta,
    )?;
    let c0 = problem.target[0].norm();
    let residual = problem
        .times
        .iter()
        .zip(&problem.target)
        .map(|(&t, c)| (bath.correlation(t) - c).norm() / c0)
        .fold(0.0, f64::max);
    Ok(FitReport { bath, residual, window })
}

impl CostFunction for &FitProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        (*self).cost(p)
    }
}

/// Trace distance between exact finite-bath dynamics and second-order
/// Markov dynamics of `model`, both started from `rho0 ⊗ ρ_R`.
pub fn compare_dynamics(
    sys: &OracleSystem,
    bath: &FiniteBath,
    model: &BathModel,
    lambda: f64,
    flavor: Flavor,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<(Vec<f64>, ExactTrajectory)> {
    let Interaction::Hermitian(a) = &sys.interaction else {
        return Err(Error::InvalidParameter("generator comparison needs a Hermitian coupling".into()));
    };
    let exact = exact_reduced(sys, bath, lambda, rho0, times)?;
    let es = EigenoperatorSet::new(&sys.h_s, std::slice::from_ref(a))?;
    let report = assemble(
        &sys.h_s,
        &es,
        model,
        GeneratorOptions { lambda, order: 2, flavor, markov: Markov::Infinite, ..Default::default() },
    )?;
    let traj = evolve(&report, rho0, times)?;
    let d = exact
        .system
        .iter()
        .zip(&traj.states)
        .map(|(x, y)| linalg::trace_distance(x, y))
        .collect::<Result<Vec<f64>>>()?;
    Ok((d, exact))
}

#[derive(Debug, Clone, Copy)]
pub struct MarkovErrorOptions {
    pub lambda: f64,
    /// Horizon in rescaled time `τ = λ² t`.
    pub horizon: f64,
    pub points: usize,
    pub modes: usize,
    pub cutoff: usize,
    /// Fit window in units of the model's correlation time.
    pub fit_window: f64,
    pub fit_tolerance: f64,
    pub flavor: Flavor,
}

impl Default for MarkovErrorOptions {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            horizon: 1.0,
            points: 41,
            modes: 3,
            cutoff: 5,
            fit_window: 5.0,
            fit_tolerance: 0.05,
            flavor: Flavor::Redfield,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovErrorReport {
    pub taus: Vec<f64>,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub fit: FitReport,
    pub recurrence_time: f64,
    pub warnings: Vec<String>,
}

/// Fits a finite bath to `model` and records the distance between exact and
/// Markov dynamics over `τ ∈ [0, horizon]`.
pub fn markov_error(
    sys: &OracleSystem,
    model: &BathModel,
    rho0: &DensityMatrix,
    opts: &MarkovErrorOptions,
) -> Result<MarkovErrorReport> {
    let fit = fit_bath(model, opts.modes, opts.cutoff, opts.fit_window)?;
    if fit.residual > opts.fit_tolerance {
        return Err(Error::FitFailure { residual: fit.residual, tolerance: opts.fit_tolerance });
    }
    markov_error_with_bath(sys, model, fit, rho0, opts)
}

/// [`markov_error`] with an already fitted bath, whatever its residual.
pub fn markov_error_with_bath(
    sys: &OracleSystem,
    model: &BathModel,
    fit: FitReport,
    rho0: &DensityMatrix,
    opts: &MarkovErrorOptions,
) -> Result<MarkovErrorReport> {
    if opts.points < 2 || !(opts.horizon > 0.0) {
        return Err(Error::InvalidParameter("markov error needs a positive horizon and at least two points".into()));
    }
    let taus: Vec<f64> = (0..opts.points).map(|i| opts.horizon * i as f64 / (opts.points - 1) as f64).collect();
    let times: Vec<f64> = if opts.lambda == 0.0 {
        taus.clone()
    } else {
        taus.iter().map(|tau| tau / (opts.lambda * opts.lambda)).collect()
    };
    let (distances, exact) = compare_dynamics(sys, &fit.bath, model, opts.lambda, opts.flavor, rho0, &times)?;
    Ok(MarkovErrorReport {
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        recurrence_time: fit.bath.recurrence_time(),
        warnings: exact.warnings,
        taus,
        times,
        distances,
        fit,
    })
}

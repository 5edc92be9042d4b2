//! Thermal bath models: two-point correlation functions, their half-Fourier
//! transforms and the fourth-order kernels built from them.
//!
//! Every kind is described by one scalar correlation `c(t)` together with a
//! real symmetric mixing matrix `M` over the coupling labels, so that
//!
//! ```text
//! Ω⁺_jk(t) = M_jk c(t),      Ω⁻_jk(t) = M_jk conj(c(t)) = conj(Ω⁺_kj(t)).
//! ```
//!
//! Transforms use the kernel `e^{-iωt}`: `Ω̂(ω) = ∫_0^∞ e^{-iωt} Ω(t) dt`.
//! With this sign the spectral function `γ(ω) = 2 Re ĉ(ω)` of a thermal bath
//! satisfies `γ(ω) = e^{-βω} γ(-ω)`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::channels::Superoperator;
use crate::error::{Error, Result};
use crate::linalg::{c64, Operator, C64, ZERO};
use crate::quad::{self, Tolerance};
use crate::spline::UniformSpline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

/// How correlations between couplings of different subsystems are treated
/// when two systems share one bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CrossCorrelationPolicy {
    /// Cross correlations vanish identically.
    Zero,
    /// Both subsystems couple to the same bath operators.
    Full,
    /// Cross correlations are the full ones multiplied by `kappa` in `[0, 1]`.
    Scaled { kappa: f64 },
}

impl CrossCorrelationPolicy {
    pub fn factor(&self) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Full => 1.0,
            Self::Scaled { kappa } => kappa,
        }
    }
}

/// A sampled correlation function `c(t)` on a uniform grid starting at 0.
///
/// CSV layout: optional `#` comment lines, then rows `t, Re c(t), Im c(t)`.
/// A header row whose first field is not a number is skipped. Between samples
/// the function is interpolated by a natural cubic spline. If the last tenth
/// of the table stays below `1e-3 |c(0)|` the table passes the decay probe and
/// `c` is taken to vanish beyond it; otherwise infinite-time transforms fail
/// with `NonIntegrable`.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    spline: UniformSpline,
    decays: bool,
}

impl CorrelationTable {
    pub fn from_samples(step: f64, values: Vec<C64>) -> Result<Self> {
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Table("non-finite correlation sample".into()));
        }
        let spline = UniformSpline::new(0.0, step, values)?;
        let vals = spline.values();
        let head = vals[0].norm();
        let tail_start = vals.len() - (vals.len() / 10).max(1);
        let decays = head > 0.0 && vals[tail_start..].iter().all(|v| v.norm() <= 1e-3 * head);
        Ok(Self { spline, decays })
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Table(e.to_string()))?;
            if record.len() != 3 {
                return Err(Error::Table(format!("row {}: expected 3 columns, got {}", line + 1, record.len())));
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(f64::from_str).collect();
            match parsed {
                Ok(v) => {
                    times.push(v[0]);
                    values.push(c64(v[1], v[2]));
                }
                Err(_) if times.is_empty() && line == 0 => continue,
                Err(e) => return Err(Error::Table(format!("row {}: {e}", line + 1))),
            }
        }
        if times.len() < 3 {
            return Err(Error::Table("need at least 3 samples".into()));
        }
        if times[0].abs() > 1e-12 {
            return Err(Error::Table(format!("grid must start at t = 0, starts at {}", times[0])));
        }
        let step = times[1] - times[0];
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0) {
                return Err(Error::Table(format!("grid is not uniform at row {}", i + 2)));
            }
        }
        Self::from_samples(step, values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Table(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn decays(&self) -> bool {
        self.decays
    }

    pub fn end(&self) -> f64 {
        self.spline.end()
    }

    pub fn step(&self) -> f64 {
        self.spline.step()
    }

    fn eval(&self, t: f64) -> Result<C64> {
        match self.spline.eval(t) {
            Some(v) => Ok(v),
            None if self.decays => Ok(ZERO),
            None => Err(Error::NonIntegrable(format!(
                "t = {t} lies beyond the table end {} and the table fails the decay probe",
                self.end()
            ))),
        }
    }

    /// First time at which `|c|` drops below `|c(0)|/e`, from the samples.
    fn efolding_time(&self) -> f64 {
        let vals = self.spline.values();
        let head = vals[0].norm();
        vals.iter()
            .position(|v| v.norm() <= head / std::f64::consts::E)
            .map(|i| (i as f64 * self.step()).max(self.step()))
            .unwrap_or(self.end() / 10.0)
    }
}

#[derive(Debug, Clone)]
pub enum BathKind {
    /// `c(t) = g e^{-t/τ}`.
    Exponential { amplitude: f64, correlation_time: f64 },
    /// Bosonic bath with spectral density `J(ω) = η ω e^{-ω/ω_c}`.
    Ohmic { coupling: f64, cutoff: f64 },
    Tabulated(CorrelationTable),
}

impl BathKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Ohmic { .. } => "ohmic",
            Self::Tabulated(_) => "tabulated",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BathModel {
    beta: f64,
    kind: BathKind,
    mixing: DMatrix<f64>,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

impl BathModel {
    pub fn new(beta: f64, kind: BathKind) -> Result<Self> {
        check_positive("beta", beta)?;
        match &kind {
            BathKind::Exponential { amplitude, correlation_time } => {
                check_positive("correlation_time", *correlation_time)?;
                if !amplitude.is_finite() {
                    return Err(Error::InvalidParameter("amplitude must be finite".into()));
                }
            }
            BathKind::Ohmic { coupling, cutoff } => {
                check_positive("cutoff", *cutoff)?;
                if !(*coupling >= 0.0 && coupling.is_finite()) {
                    return Err(Error::InvalidParameter(format!("coupling must be non-negative, got {coupling}")));
                }
            }
            BathKind::Tabulated(_) => {}
        }
        Ok(Self { beta, kind, mixing: DMatrix::identity(1, 1) })
    }

    pub fn exponential(beta: f64, amplitude: f64, correlation_time: f64) -> Result<Self> {
        Self::new(beta, BathKind::Exponential { amplitude, correlation_time })
    }

    pub fn ohmic(beta: f64, coupling: f64, cutoff: f64) -> Result<Self> {
        Self::new(beta, BathKind::Ohmic { coupling, cutoff })
    }

    pub fn tabulated(beta: f64, table: CorrelationTable) -> Result<Self> {
        Self::new(beta, BathKind::Tabulated(table))
    }

    /// `n` independent, identically distributed coupling labels.
    pub fn with_labels(mut self, n: usize) -> Self {
        self.mixing = DMatrix::identity(n, n);
        self
    }

    pub fn with_mixing(mut self, mixing: DMatrix<f64>) -> Result<Self> {
        if !mixing.is_square() || mixing.nrows() == 0 {
            return Err(Error::DimensionMismatch("mixing matrix must be square and non-empty".into()));
        }
        if (&mixing - mixing.transpose()).amax() > 1e-14 {
            return Err(Error::InvalidParameter("mixing matrix must be symmetric".into()));
        }
        self.mixing = mixing;
        Ok(self)
    }

    /// The bath seen by two subsystems that each couple through this model's
    /// labels. Labels `0..n` belong to the first subsystem and `n..2n` to the
    /// second; cross entries are scaled by the policy factor.
    pub fn joint(&self, policy: CrossCorrelationPolicy) -> Result<Self> {
        let kappa = policy.factor();
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidParameter(format!("cross-correlation factor must lie in [0, 1], got {kappa}")));
        }
        let n = self.labels();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.mixing);
        m.view_mut((n, n), (n, n)).copy_from(&self.mixing);
        if kappa != 0.0 {
            m.view_mut((0, n), (n, n)).copy_from(&(&self.mixing * kappa));
            m.view_mut((n, 0), (n, n)).copy_from(&(&self.mixing * kappa));
        }
        Ok(Self { mixing: m, ..self.clone() })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> &BathKind {
        &self.kind
    }

    pub fn labels(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    /// Characteristic decay time `τ_R` of the correlation function.
    pub fn correlation_time(&self) -> f64 {
        match &self.kind {
            BathKind::Exponential { correlation_time, .. } => *correlation_time,
            BathKind::Ohmic { cutoff, .. } => 1.0 / cutoff,
            BathKind::Tabulated(table) => table.efolding_time(),
        }
    }

    fn mix(&self, j: usize, k: usize) -> Result<f64> {
        let n = self.labels();
        if j >= n || k >= n {
            return Err(Error::InvalidParameter(format!("coupling label ({j}, {k}) out of range for {n} labels")));
        }
        Ok(self.mixing[(j, k)])
    }

    fn signed(sign: Sign, v: C64) -> C64 {
        match sign {
            Sign::Plus => v,
            Sign::Minus => v.conj(),
        }
    }

    /// `Ω±_jk(t)`.
    pub fn correlation(&self, j: usize, k: usize, sign: Sign, t: f64) -> Result<C64> {
        let m = self.mix(j, k)?;
        Ok(Self::signed(sign, self.base_correlation(t)?) * m)
    }

    /// `Ω̂±_jk(ω)`. For the minus sign `Ω̂⁻(ω) = conj(ĉ(-ω))`.
    pub fn half_fourier(&self, j: usize, k: usize, sign: Sign, omega: f64) -> Result<C64> {
        let m = self.mix(j, k)?;
        let v = match sign {
            Sign::Plus => self.base_half_fourier(omega)?,
            Sign::Minus => self.base_half_fourier(-omega)?.conj(),
        };
        Ok(v * m)
    }

    /// `∫_0^t e^{-iωs} Ω±_jk(s) ds`.
    pub fn finite_half_fourier(&self, j: usize, k: usize, sign: Sign, omega: f64, t: f64) -> Result<C64> {
        let m = self.mix(j, k)?;
        let v = match sign {
            Sign::Plus => self.base_finite_half_fourier(omega, t)?,
            Sign::Minus => self.base_finite_half_fourier(-omega, t)?.conj(),
        };
        Ok(v * m)
    }

    /// Spectral function `γ(ω) = 2 Re ĉ(ω)`.
    pub fn spectral_function(&self, omega: f64) -> Result<f64> {
        Ok(2.0 * self.base_half_fourier(omega)?.re)
    }

    /// Scalar correlation `c(t)` shared by all labels.
    pub fn base_correlation(&self, t: f64) -> Result<C64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        match &self.kind {
            BathKind::Exponential { amplitude, correlation_time } => {
                Ok(c64(amplitude * (-t / correlation_time).exp(), 0.0))
            }
            BathKind::Ohmic { coupling, cutoff } => {
                // η Σ_k [(1/ω_c + kβ + it)^-2 + (1/ω_c + (k+1)β - it)^-2], the
                // Bose series of the spectral integral, summed with trigamma.
                let b = self.beta;
                let a = 1.0 / cutoff;
                let z1 = c64(a, t) / b;
                let z2 = c64(a, -t) / b + 1.0;
                Ok((quad::trigamma(z1) + quad::trigamma(z2)) * (coupling / (b * b)))
            }
            BathKind::Tabulated(table) => table.eval(t),
        }
    }

    fn ohmic_gamma(&self, nu: f64) -> f64 {
        let BathKind::Ohmic { coupling, cutoff } = self.kind else { unreachable!() };
        let x = self.beta * nu;
        let bose = if x.abs() < 1e-12 { 1.0 / self.beta } else { nu / x.exp_m1() };
        2.0 * std::f64::consts::PI * coupling * (-nu.abs() / cutoff).exp() * bose
    }

    fn require_decay(&self) -> Result<()> {
        match &self.kind {
            BathKind::Tabulated(table) if !table.decays() => Err(Error::NonIntegrable(
                "tabulated correlation does not decay below 1e-3 of its initial value".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Integration horizon beyond which `c` is negligible or zero.
    fn horizon(&self) -> f64 {
        match &self.kind {
            BathKind::Exponential { correlation_time, .. } => 60.0 * correlation_time,
            BathKind::Ohmic { cutoff, .. } => 400.0 / cutoff,
            BathKind::Tabulated(table) => table.end(),
        }
    }

    /// `ĉ(ω) = ∫_0^∞ e^{-iωt} c(t) dt`.
    pub fn base_half_fourier(&self, omega: f64) -> Result<C64> {
        self.require_decay()?;
        match &self.kind {
            BathKind::Exponential { amplitude, correlation_time } => {
                Ok(c64(*amplitude, 0.0) / c64(1.0 / correlation_time, omega))
            }
            BathKind::Ohmic { cutoff, .. } => {
                // ĉ(ω) = γ(ω)/2 - (i/2π) P∫ γ(ν)/(ω-ν) dν
                let upper = omega.abs() + 60.0 * cutoff;
                let mut breaks = vec![0.0];
                if omega != 0.0 {
                    breaks.push(omega.abs());
                }
                let mut x = breaks[breaks.len() - 1];
                while x < upper {
                    x = (x + 2.0 * cutoff).min(upper);
                    breaks.push(x);
                }
                let mut f = |u: f64| c64((self.ohmic_gamma(omega - u) - self.ohmic_gamma(omega + u)) / u, 0.0);
                let pv = quad::integrate_breaks(&mut f, &breaks, Tolerance::new(1e-14, 1e-11))?.re;
                Ok(c64(0.5 * self.ohmic_gamma(omega), -pv / (2.0 * std::f64::consts::PI)))
            }
            BathKind::Tabulated(table) => self.base_finite_half_fourier(omega, table.end()),
        }
    }

    fn panel_breaks(&self, t: f64, omega_max: f64) -> Vec<f64> {
        let tau = self.correlation_time();
        let osc = if omega_max > 0.0 { 2.0 / omega_max } else { f64::INFINITY };
        let mut breaks = vec![0.0];
        let mut x = 0.0;
        while x < t {
            let w = (0.5 * tau).max(x / 8.0).min(osc);
            x = (x + w).min(t);
            breaks.push(x);
        }
        breaks
    }

    /// `∫_0^t e^{-iωs} c(s) ds`.
    pub fn base_finite_half_fourier(&self, omega: f64, t: f64) -> Result<C64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        match &self.kind {
            BathKind::Exponential { amplitude, correlation_time } => {
                let a = c64(1.0 / correlation_time, omega);
                Ok((c64(1.0, 0.0) - (-a * t).exp()) / a * *amplitude)
            }
            _ => {
                let t_eff = match &self.kind {
                    BathKind::Tabulated(table) if table.decays() => t.min(table.end()),
                    _ => t,
                };
                let breaks = self.panel_breaks(t_eff, omega.abs());
                let mut err = None;
                let mut f = |s: f64| match self.base_correlation(s) {
                    Ok(c) => c * C64::from_polar(1.0, -omega * s),
                    Err(e) => {
                        err.get_or_insert(e);
                        ZERO
                    }
                };
                let v = quad::integrate_breaks(&mut f, &breaks, Tolerance::new(1e-14, 1e-11))?;
                match err {
                    Some(e) => Err(e),
                    None => Ok(v),
                }
            }
        }
    }

    /// `c(t1+t2) c(t2+t3)`, the label-free part of the first fourth-order kernel.
    pub fn p1_base_kernel(&self, t: [f64; 3]) -> Result<C64> {
        Ok(self.base_correlation(t[0] + t[1])? * self.base_correlation(t[1] + t[2])?)
    }

    /// `∫∫∫_{[0,∞)^3} e^{-iΔ·t} c(t1+t2) c(t2+t3) dt`.
    pub fn p1_base_transform(&self, delta: [f64; 3]) -> Result<C64> {
        match &self.kind {
            BathKind::Exponential { amplitude, correlation_time } => {
                let r = 1.0 / correlation_time;
                Ok(c64(amplitude * amplitude, 0.0)
                    / (c64(r, delta[0]) * c64(2.0 * r, delta[1]) * c64(r, delta[2])))
            }
            _ => self.p1_base_transform_numeric(delta),
        }
    }

    /// Quadrature route for [`Self::p1_base_transform`], valid for every kind.
    ///
    /// The `t1` and `t3` integrals are tails `∫_{t2}^∞ e^{-iΔs} c(s) ds`,
    /// accumulated backwards over the outer Kronrod nodes, so the triple
    /// integral costs one pass over a single grid.
    pub fn p1_base_transform_numeric(&self, delta: [f64; 3]) -> Result<C64> {
        self.require_decay()?;
        let horizon = self.horizon();
        let dmax = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let breaks = self.panel_breaks(horizon, 3.0 * dmax);
        let nodes: Vec<(f64, f64)> = breaks.windows(2).flat_map(|w| quad::kronrod_rule(w[0], w[1])).collect();

        let mut err = None;
        let mut c = |s: f64| match self.base_correlation(s) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                ZERO
            }
        };
        let far_tail = |d: f64| -> Result<C64> {
            match &self.kind {
                BathKind::Ohmic { cutoff, .. } => {
                    let panel = if d != 0.0 { (2.0 / d.abs()).min(10.0 / cutoff) } else { 10.0 / cutoff };
                    quad::integrate_half_line(
                        |s| self.base_correlation(s).unwrap_or(ZERO) * C64::from_polar(1.0, -d * s),
                        horizon,
                        panel,
                        panel,
                        1e6 / cutoff,
                        Tolerance::new(1e-15, 1e-10),
                    )
                }
                _ => Ok(ZERO),
            }
        };
        let mut tail1 = far_tail(delta[0])?;
        let mut tail3 = far_tail(delta[2])?;
        let far_outer = self.p1_far_outer(delta, horizon, tail1, tail3)?;
        let mut upper = horizon;
        let mut total = ZERO;
        for &(x, w) in nodes.iter().rev() {
            let (d1, d3) = (delta[0], delta[2]);
            // One Kronrod rule per gap between neighbouring nodes; both tails
            // share the correlation samples.
            let rule = quad::kronrod_rule(x, upper);
            for &(s, ws) in &rule {
                let cs = c(s) * ws;
                tail1 += cs * C64::from_polar(1.0, -d1 * s);
                tail3 += cs * C64::from_polar(1.0, -d3 * s);
            }
            upper = x;
            let a1 = tail1 * C64::from_polar(1.0, d1 * x);
            let a3 = tail3 * C64::from_polar(1.0, d3 * x);
            total += a1 * a3 * C64::from_polar(w, -delta[1] * x);
        }
        match err {
            Some(e) => Err(e),
            None => Ok(total + far_outer),
        }
    }

    /// Outer integral beyond the horizon. It only matters for the ohmic kind
    /// when `Δ1 = Δ3 = 0`: then both inner tails decay like `1/t` and the
    /// outer integrand like `1/t²`, giving `A1(H) A3(H) H E_2(iΔ2 H)`.
    fn p1_far_outer(&self, delta: [f64; 3], horizon: f64, tail1: C64, tail3: C64) -> Result<C64> {
        let BathKind::Ohmic { .. } = self.kind else { return Ok(ZERO) };
        if delta[0].abs() > 1e-12 || delta[2].abs() > 1e-12 {
            return Ok(ZERO);
        }
        let z = delta[1] * horizon;
        let e2 = if z == 0.0 {
            c64(1.0, 0.0)
        } else {
            let panel = (2.0 / z.abs()).min(1.0);
            quad::integrate_half_line(
                |s| C64::from_polar(1.0 / (s * s), -z * s),
                1.0,
                panel,
                panel,
                1e6,
                Tolerance::new(1e-13, 1e-8),
            )?
        };
        Ok(tail1 * tail3 * horizon * e2)
    }

    /// `∫_{t1+t2+t3 ≤ t} e^{-iΔ·t} c(t1+t2) c(t2+t3) dt`.
    pub fn p1_base_finite_transform(&self, delta: [f64; 3], t: f64) -> Result<C64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        match &self.kind {
            BathKind::Exponential { amplitude, correlation_time } => {
                let r = 1.0 / correlation_time;
                let a = [c64(r, delta[0]), c64(2.0 * r, delta[1]), c64(r, delta[2])];
                Ok(simplex_exponential_integral(a, t)? * (amplitude * amplitude))
            }
            _ => self.p1_base_finite_transform_numeric(delta, t),
        }
    }

    /// Nested adaptive quadrature over the simplex, valid for every kind.
    pub fn p1_base_finite_transform_numeric(&self, delta: [f64; 3], t: f64) -> Result<C64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let tol = Tolerance::new(1e-13, 1e-8);
        let phase = |d: f64, s: f64| C64::from_polar(1.0, -d * s);
        let c = |s: f64| self.base_correlation(s).unwrap_or(ZERO);
        // Surface any evaluation error once up front.
        self.base_correlation(t)?;
        let dmax = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let breaks = |len: f64| self.panel_breaks(len, dmax);
        let mut failure = None;
        let mut outer = |t2: f64| -> C64 {
            let r = t - t2;
            let mut middle = |t1: f64| -> C64 {
                let mut inner = |t3: f64| c(t2 + t3) * phase(delta[2], t3);
                let f3 = quad::integrate_breaks(&mut inner, &breaks(r - t1), tol).unwrap_or(ZERO);
                c(t1 + t2) * phase(delta[0], t1) * f3
            };
            match quad::integrate_breaks(&mut middle, &breaks(r), tol) {
                Ok(v) => v * phase(delta[1], t2),
                Err(e) => {
                    failure.get_or_insert(e);
                    ZERO
                }
            }
        };
        let v = quad::integrate_breaks(&mut outer, &breaks(t), tol)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// `Ω^(p)_{jkℓm}(t1, t2, t3)` for a registered term.
    pub fn fourth_order_kernel(&self, term: &dyn FourthOrderTerm, idx: [usize; 4], t: [f64; 3]) -> Result<C64> {
        let f = self.label_factor(term, idx)?;
        if f == 0.0 {
            return Ok(ZERO);
        }
        Ok(term.base_kernel(self, t)? * f)
    }

    /// `Ω̂^(p)_{jkℓm}(Δ)`.
    pub fn triple_transform(&self, term: &dyn FourthOrderTerm, idx: [usize; 4], delta: [f64; 3]) -> Result<C64> {
        let f = self.label_factor(term, idx)?;
        if f == 0.0 {
            return Ok(ZERO);
        }
        Ok(term.base_transform(self, delta)? * f)
    }

    /// Finite-time counterpart of [`Self::triple_transform`].
    pub fn finite_triple_transform(
        &self,
        term: &dyn FourthOrderTerm,
        idx: [usize; 4],
        delta: [f64; 3],
        t: f64,
    ) -> Result<C64> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let f = self.label_factor(term, idx)?;
        if f == 0.0 {
            return Ok(ZERO);
        }
        Ok(term.base_finite_transform(self, delta, t)? * f)
    }

    fn label_factor(&self, term: &dyn FourthOrderTerm, idx: [usize; 4]) -> Result<f64> {
        let n = self.labels();
        if idx.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter(format!("coupling labels {idx:?} out of range for {n} labels")));
        }
        Ok(term.label_factor(&self.mixing, idx))
    }
}

/// `∫_{s1+s2+s3 ≤ t} e^{-(a1 s1 + a2 s2 + a3 s3)} ds`, read off the corner of
/// the exponential of a bidiagonal 4×4 matrix.
fn simplex_exponential_integral(a: [C64; 3], t: f64) -> Result<C64> {
    let mut m = Matrix4::<C64>::zeros();
    for i in 0..3 {
        m[(i, i + 1)] = c64(1.0, 0.0);
        m[(i + 1, i + 1)] = -a[i];
    }
    let e = crate::linalg::expm(&DMatrix::from_iterator(4, 4, (m * c64(t, 0.0)).iter().copied()))?;
    Ok(e[(0, 3)])
}

/// Identifier of a fourth-order contribution: the index `p` of the fourth-order
/// sum, optionally mirrored by Hermitian conjugation (`"1*"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermId {
    pub p: u8,
    pub adjoint: bool,
}

impl TermId {
    pub const P1: TermId = TermId { p: 1, adjoint: false };
    pub const P1_ADJOINT: TermId = TermId { p: 1, adjoint: true };
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.p, if self.adjoint { "*" } else { "" })
    }
}

impl FromStr for TermId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (digits, adjoint) = match s.trim().strip_suffix('*') {
            Some(d) => (d, true),
            None => (s.trim(), false),
        };
        let p: u8 = digits.parse().map_err(|_| Error::UnregisteredTerm(s.to_string()))?;
        Ok(TermId { p, adjoint })
    }
}

impl Serialize for TermId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TermId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One fourth-order contribution `Σ Ω̂^(p)(Δ) D^(p)`.
///
/// Kernels factor as `label_factor(M, idx) × base(t)`, where the base part
/// depends only on the scalar bath correlation. A term whose [`mirror_of`]
/// returns `Some(q)` contributes `ρ ↦ (K^(q)[ρ†])†` and needs no operator of
/// its own.
///
/// [`mirror_of`]: FourthOrderTerm::mirror_of
pub trait FourthOrderTerm: Send + Sync + fmt::Debug {
    fn id(&self) -> TermId;
    fn label_factor(&self, mixing: &DMatrix<f64>, idx: [usize; 4]) -> f64;
    fn base_kernel(&self, bath: &BathModel, t: [f64; 3]) -> Result<C64>;
    fn base_transform(&self, bath: &BathModel, delta: [f64; 3]) -> Result<C64>;
    fn base_finite_transform(&self, bath: &BathModel, delta: [f64; 3], t: f64) -> Result<C64>;
    /// Phase vector from the Bohr frequencies `(ω_j, ω_k, ω_ℓ, ω_m)`.
    fn delta(&self, omega: [f64; 4]) -> [f64; 3];
    /// `D^(p)` for the eigenoperators `(V_j, V_k, V_ℓ, V_m)`; `None` when it vanishes.
    fn operator(&self, v: [&Operator; 4]) -> Option<Superoperator>;
    fn mirror_of(&self) -> Option<TermId> {
        None
    }
}

/// The printed fourth-order term: kernel `Ω⁺_jℓ(t1+t2) Ω⁺_km(t2+t3)` and
/// operator `ρ ↦ [V_j, [V_k, V_ℓ] V_m ρ]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct P1;

impl FourthOrderTerm for P1 {
    fn id(&self) -> TermId {
        TermId::P1
    }

    fn label_factor(&self, mixing: &DMatrix<f64>, [j, k, l, m]: [usize; 4]) -> f64 {
        mixing[(j, l)] * mixing[(k, m)]
    }

    fn base_kernel(&self, bath: &BathModel, t: [f64; 3]) -> Result<C64> {
        bath.p1_base_kernel(t)
    }

    fn base_transform(&self, bath: &BathModel, delta: [f64; 3]) -> Result<C64> {
        bath.p1_base_transform(delta)
    }

    fn base_finite_transform(&self, bath: &BathModel, delta: [f64; 3], t: f64) -> Result<C64> {
        bath.p1_base_finite_transform(delta, t)
    }

    fn delta(&self, [_, wk, wl, wm]: [f64; 4]) -> [f64; 3] {
        [wk + wl + wm, wl + wm, wm]
    }

    fn operator(&self, [vj, vk, vl, vm]: [&Operator; 4]) -> Option<Superoperator> {
        let comm = vk * vl - vl * vk;
        if comm.iter().all(|z| *z == ZERO) {
            return None;
        }
        let inner = comm * vm;
        if inner.iter().all(|z| *z == ZERO) {
            return None;
        }
        let left = vj * &inner;
        Some(Superoperator::left(&left) - Superoperator::sandwich(&inner, vj))
    }
}

/// Hermitian mirror of [`P1`]: `ρ ↦ (K^(1)[ρ†])†`, with conjugated kernels.
#[derive(Debug, Clone, Copy, Default)]
pub struct P1Adjoint;

impl FourthOrderTerm for P1Adjoint {
    fn id(&self) -> TermId {
        TermId::P1_ADJOINT
    }

    fn label_factor(&self, mixing: &DMatrix<f64>, idx: [usize; 4]) -> f64 {
        P1.label_factor(mixing, idx)
    }

    fn base_kernel(&self, bath: &BathModel, t: [f64; 3]) -> Result<C64> {
        Ok(bath.p1_base_kernel(t)?.conj())
    }

    fn base_transform(&self, bath: &BathModel, delta: [f64; 3]) -> Result<C64> {
        Ok(bath.p1_base_transform(delta)?.conj())
    }

    fn base_finite_transform(&self, bath: &BathModel, delta: [f64; 3], t: f64) -> Result<C64> {
        Ok(bath.p1_base_finite_transform(delta, t)?.conj())
    }

    fn delta(&self, omega: [f64; 4]) -> [f64; 3] {
        P1.delta(omega)
    }

    fn operator(&self, _v: [&Operator; 4]) -> Option<Superoperator> {
        None
    }

    fn mirror_of(&self) -> Option<TermId> {
        Some(TermId::P1)
    }
}

/// Registered fourth-order terms, looked up by [`TermId`].
#[derive(Debug, Clone, Default)]
pub struct TermRegistry {
    terms: BTreeMap<TermId, Arc<dyn FourthOrderTerm>>,
}

impl TermRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `P1` and its Hermitian mirror.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(P1));
        r.register(Arc::new(P1Adjoint));
        r
    }

    pub fn register(&mut self, term: Arc<dyn FourthOrderTerm>) {
        self.terms.insert(term.id(), term);
    }

    pub fn get(&self, id: TermId) -> Result<&Arc<dyn FourthOrderTerm>> {
        self.terms.get(&id).ok_or_else(|| Error::UnregisteredTerm(id.to_string()))
    }

    pub fn ids(&self) -> Vec<TermId> {
        self.terms.keys().copied().collect()
    }

    /// Default term set used by the generators.
    pub fn default_terms() -> Vec<TermId> {
        vec![TermId::P1, TermId::P1_ADJOINT]
    }
}

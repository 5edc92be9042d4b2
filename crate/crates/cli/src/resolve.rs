//! Semantic validation: turns a parsed file into typed experiment inputs.

use nalgebra::DMatrix;
use oqscp::bath::{BathModel, CorrelationTable, CrossCorrelationPolicy, TermId, TermRegistry};
use oqscp::generators::{Flavor, Markov};
use oqscp::linalg::{self, c64, Operator};
use oqscp::policy::NumericPolicy;

use crate::config::{Diagnostic, Loaded, MatrixSpec, SystemSection, EXPERIMENTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    TransposeDemo,
    BuildGenerator,
    Evolve,
    CpCheck,
    Factorize,
    PairDynamics,
    OracleCompare,
}

impl Experiment {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "transpose-demo" => Self::TransposeDemo,
            "build-generator" => Self::BuildGenerator,
            "evolve" => Self::Evolve,
            "cp-check" => Self::CpCheck,
            "factorize" => Self::Factorize,
            "pair-dynamics" => Self::PairDynamics,
            "oracle-compare" => Self::OracleCompare,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        EXPERIMENTS[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Ground,
    Excited,
    Plus,
    MaximallyMixed,
    Gibbs,
    Random,
}

impl StateKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ground" => Self::Ground,
            "excited" => Self::Excited,
            "plus" => Self::Plus,
            "maximally-mixed" => Self::MaximallyMixed,
            "gibbs" => Self::Gibbs,
            "random" => Self::Random,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub hamiltonian: Operator,
    pub couplings: Vec<Operator>,
    pub state: StateKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpMap {
    Identity,
    Transposition,
    Depolarizing,
    RandomKraus,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    TransposeMixture,
    Davies,
    Redfield,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub modes: usize,
    pub fock_cutoff: usize,
    pub fit_window: f64,
    pub fit_tolerance: f64,
    pub horizon: f64,
    pub points: usize,
    pub allow_poor_fit: bool,
    pub scaling_probe: bool,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub seed: u64,
    pub lambda: f64,
    pub order: u8,
    pub flavor: Flavor,
    pub markov: Markov,
    pub terms: Vec<TermId>,
    pub system: Option<SystemSpec>,
    pub partner: Option<SystemSpec>,
    pub bath: Option<BathModel>,
    pub policy: CrossCorrelationPolicy,
    pub times: Option<Vec<f64>>,
    pub cp_map: CpMap,
    pub cp_dim: usize,
    pub kraus_count: usize,
    pub cp_tolerance: f64,
    pub family: Family,
    pub singlet_probe: bool,
    pub pair_tolerance: f64,
    pub kappas: Vec<f64>,
    pub oracle: OracleSettings,
}

struct Ctx<'a> {
    loaded: &'a Loaded,
    diags: Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn err(&mut self, field: &str, message: impl Into<String>) {
        let d = self.loaded.diagnostic(field, message);
        self.diags.push(d);
    }

    fn positive(&mut self, field: &str, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            self.err(field, format!("must be positive and finite, got {v}"));
        }
        v
    }

    fn required<T: Clone>(&mut self, field: &str, v: &Option<T>) -> Option<T> {
        if v.is_none() {
            self.err(field, "is required for this experiment");
        }
        v.clone()
    }

    fn matrix(&mut self, field: &str, spec: &MatrixSpec) -> Option<Operator> {
        let (re, im) = match spec {
            MatrixSpec::Real(re) => (re, None),
            MatrixSpec::Complex { re, im } => (re, Some(im)),
        };
        let d = re.len();
        let square = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if d == 0 || !square(re) || im.is_some_and(|im| !square(im)) {
            self.err(field, "must be a non-empty square matrix given as rows");
            return None;
        }
        let m = DMatrix::from_fn(d, d, |i, j| c64(re[i][j], im.map_or(0.0, |im| im[i][j])));
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            self.err(field, "entries must be finite");
            return None;
        }
        Some(m)
    }

    fn system(&mut self, section: &str, s: &SystemSection, default_state: StateKind) -> Option<SystemSpec> {
        let h = self.required(&format!("{section}.hamiltonian"), &s.hamiltonian)?;
        let h = self.matrix(&format!("{section}.hamiltonian"), &h)?;
        let tol = NumericPolicy::DEFAULT.hermiticity;
        if !linalg::is_hermitian(&h, tol) {
            self.err(&format!("{section}.hamiltonian"), "must be Hermitian");
        }
        let raw = self.required(&format!("{section}.couplings"), &s.couplings)?;
        if raw.is_empty() {
            self.err(&format!("{section}.couplings"), "needs at least one coupling operator");
        }
        let mut couplings = Vec::new();
        for (i, c) in raw.iter().enumerate() {
            let field = format!("{section}.couplings");
            let m = self.matrix(&field, c)?;
            if m.shape() != h.shape() {
                self.err(&field, format!("coupling {i} has dimension {}, Hamiltonian has {}", m.nrows(), h.nrows()));
            } else if !linalg::is_hermitian(&m, tol) {
                self.err(&field, format!("coupling {i} must be Hermitian"));
            }
            couplings.push(m);
        }
        let state = match &s.state {
            None => default_state,
            Some(name) => match StateKind::parse(name) {
                Some(k) => k,
                None => {
                    self.err(
                        &format!("{section}.state"),
                        format!("unknown state `{name}`; expected one of ground, excited, plus, maximally-mixed, gibbs, random"),
                    );
                    default_state
                }
            },
        };
        Some(SystemSpec { hamiltonian: h, couplings, state })
    }

    fn bath(&mut self) -> Option<BathModel> {
        let b = self.required("bath", &self.loaded.raw.bath.clone())?;
        let n = self.diags.len();
        let kind = self.required("bath.kind", &b.kind)?;
        let beta = self.required("bath.beta", &b.beta).map(|v| self.positive("bath.beta", v))?;
        let model = match kind.as_str() {
            "exponential" => {
                let a = self.required("bath.amplitude", &b.amplitude).map(|v| self.positive("bath.amplitude", v));
                let t = self.required("bath.correlation_time", &b.correlation_time).map(|v| self.positive("bath.correlation_time", v));
                BathModel::exponential(beta, a?, t?)
            }
            "ohmic" => {
                let c = self.required("bath.coupling", &b.coupling).map(|v| self.positive("bath.coupling", v));
                let w = self.required("bath.cutoff", &b.cutoff).map(|v| self.positive("bath.cutoff", v));
                BathModel::ohmic(beta, c?, w?)
            }
            "tabulated" => {
                let path = self.required("bath.table", &b.table)?;
                let path = self.loaded.base_dir.join(path);
                match CorrelationTable::from_csv_path(&path) {
                    Ok(t) => BathModel::tabulated(beta, t),
                    Err(e) => {
                        self.err("bath.table", format!("{}: {e}", path.display()));
                        return None;
                    }
                }
            }
            other => {
                self.err("bath.kind", format!("unknown bath kind `{other}`; expected one of exponential, ohmic, tabulated"));
                return None;
            }
        };
        if self.diags.len() > n {
            return None;
        }
        match model {
            Ok(m) => Some(m),
            Err(e) => {
                self.err("bath", e.to_string());
                None
            }
        }
    }

    fn times(&mut self) -> Option<Vec<f64>> {
        let t = self.loaded.raw.time.clone()?;
        let grid = match (&t.values, t.points) {
            (Some(v), _) => v.clone(),
            (None, Some(points)) => {
                let start = t.start.unwrap_or(0.0);
                let Some(stop) = t.stop else {
                    self.err("time.stop", "is required with time.points");
                    return None;
                };
                if points == 0 {
                    Vec::new()
                } else if points == 1 {
                    vec![start]
                } else {
                    if stop <= start {
                        self.err("time.stop", format!("must exceed time.start ({start}), got {stop}"));
                        return None;
                    }
                    (0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect()
                }
            }
            (None, None) => {
                self.err("time", "needs either `values` or `points` with `stop`");
                return None;
            }
        };
        if grid.is_empty() {
            self.err(if t.values.is_some() { "time.values" } else { "time.points" }, "time grid is empty");
            return None;
        }
        if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
            self.err("time", "times must be finite and non-negative");
            return None;
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            self.err("time", "time grid must be strictly ascending");
            return None;
        }
        Some(grid)
    }
}

pub fn resolve(loaded: &Loaded, cli_experiment: &str, seed_override: Option<u64>) -> Result<Resolved, Vec<Diagnostic>> {
    let mut cx = Ctx { loaded, diags: Vec::new() };
    let raw = &loaded.raw;
    let allowed = EXPERIMENTS.join(", ");
    let experiment = match Experiment::parse(cli_experiment) {
        Some(e) => e,
        None => {
            cx.err("experiment", format!("unknown experiment `{cli_experiment}`; expected one of {allowed}"));
            return Err(cx.diags);
        }
    };
    if let Some(name) = &raw.experiment {
        match Experiment::parse(name) {
            None => cx.err("experiment", format!("unknown experiment `{name}`; expected one of {allowed}")),
            Some(e) if e != experiment => {
                cx.err("experiment", format!("file is for `{name}` but `{}` was requested", experiment.name()))
            }
            _ => {}
        }
    }

    let lambda = raw.lambda.unwrap_or(0.05);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        cx.err("lambda", format!("must be non-negative and finite, got {lambda}"));
    }
    let order = raw.order.unwrap_or(2);
    if order != 2 && order != 4 {
        cx.err("order", format!("must be 2 or 4, got {order}"));
    }
    let flavor = match raw.flavor.as_deref().unwrap_or("redfield") {
        "redfield" => Flavor::Redfield,
        "davies" | "davies-secular" => Flavor::DaviesSecular,
        other => {
            cx.err("flavor", format!("unknown flavor `{other}`; expected redfield or davies-secular"));
            Flavor::Redfield
        }
    };
    let markov = match raw.memory_time {
        None => Markov::Infinite,
        Some(t) if t >= 0.0 && t.is_finite() => Markov::Finite { t },
        Some(t) => {
            cx.err("memory_time", format!("must be non-negative and finite, got {t}"));
            Markov::Infinite
        }
    };
    let registry = TermRegistry::standard();
    let terms = match &raw.terms {
        None => TermRegistry::default_terms(),
        Some(names) => names
            .iter()
            .filter_map(|n| match n.parse::<TermId>().and_then(|id| registry.get(id).map(|_| id)) {
                Ok(id) => Some(id),
                Err(e) => {
                    cx.err("terms", e.to_string());
                    None
                }
            })
            .collect(),
    };
    let policy = match &raw.policy {
        None => CrossCorrelationPolicy::Zero,
        Some(p) => match p.mode.as_deref().unwrap_or("zero") {
            "zero" => CrossCorrelationPolicy::Zero,
            "full" => CrossCorrelationPolicy::Full,
            "scaled" => {
                let kappa = p.kappa.unwrap_or(f64::NAN);
                if !(0.0..=1.0).contains(&kappa) {
                    cx.err("policy.kappa", format!("must lie in [0, 1], got {kappa}"));
                }
                CrossCorrelationPolicy::Scaled { kappa }
            }
            other => {
                cx.err("policy.mode", format!("unknown policy `{other}`; expected zero, full or scaled"));
                CrossCorrelationPolicy::Zero
            }
        },
    };

    let cp = raw.cp_check.clone().unwrap_or_default();
    let cp_map = match cp.map.as_deref().unwrap_or("transposition") {
        "identity" => CpMap::Identity,
        "transposition" => CpMap::Transposition,
        "depolarizing" => CpMap::Depolarizing,
        "random-kraus" => CpMap::RandomKraus,
        "generator" => CpMap::Generator,
        other => {
            cx.err(
                "cp_check.map",
                format!("unknown map `{other}`; expected identity, transposition, depolarizing, random-kraus or generator"),
            );
            CpMap::Transposition
        }
    };
    let cp_dim = cp.dim.unwrap_or(2);
    if cp_dim == 0 {
        cx.err("cp_check.dim", "must be at least 1");
    }
    let kraus_count = cp.kraus_count.unwrap_or(2);
    if kraus_count == 0 {
        cx.err("cp_check.kraus_count", "must be at least 1");
    }
    let cp_tolerance = cp.tolerance.unwrap_or(1e-9);

    let pair = raw.pair.clone().unwrap_or_default();
    let family = match pair.family.as_deref().unwrap_or("transpose-mixture") {
        "transpose-mixture" => Family::TransposeMixture,
        "davies" => Family::Davies,
        "redfield" => Family::Redfield,
        other => {
            cx.err("pair.family", format!("unknown family `{other}`; expected transpose-mixture, davies or redfield"));
            Family::TransposeMixture
        }
    };
    let singlet_probe = match pair.probe.as_deref().unwrap_or("singlet") {
        "singlet" => true,
        "product" => false,
        other => {
            cx.err("pair.probe", format!("unknown probe `{other}`; expected singlet or product"));
            true
        }
    };
    let pair_tolerance = pair.tolerance.unwrap_or(1e-6);

    let o = raw.oracle.clone().unwrap_or_default();
    let oracle = OracleSettings {
        modes: o.modes.unwrap_or(3),
        fock_cutoff: o.fock_cutoff.unwrap_or(5),
        fit_window: o.fit_window.unwrap_or(5.0),
        fit_tolerance: o.fit_tolerance.unwrap_or(0.05),
        horizon: o.horizon.unwrap_or(1.0),
        points: o.points.unwrap_or(41),
        allow_poor_fit: o.allow_poor_fit.unwrap_or(false),
        scaling_probe: o.scaling_probe.unwrap_or(false),
    };
    if !(1..=6).contains(&oracle.modes) {
        cx.err("oracle.modes", format!("must be between 1 and 6, got {}", oracle.modes));
    }
    if oracle.fock_cutoff == 0 {
        cx.err("oracle.fock_cutoff", "must be at least 1");
    }
    if oracle.points < 2 {
        cx.err("oracle.points", "must be at least 2");
    }
    cx.positive("oracle.horizon", oracle.horizon);
    cx.positive("oracle.fit_window", oracle.fit_window);

    let kappas = raw.factorize.as_ref().and_then(|f| f.kappas.clone()).unwrap_or_default();
    if kappas.iter().any(|k| !(0.0..=1.0).contains(k)) {
        cx.err("factorize.kappas", "every kappa must lie in [0, 1]");
    }

    use Experiment::*;
    let needs_system = match experiment {
        TransposeDemo => false,
        CpCheck => cp_map == CpMap::Generator,
        PairDynamics => family != Family::TransposeMixture,
        _ => true,
    };
    let default_state = if experiment == Evolve { StateKind::Excited } else { StateKind::Random };
    let system = if needs_system {
        let s = cx.required("system", &raw.system).unwrap_or_default();
        if raw.system.is_some() {
            cx.system("system", &s, default_state)
        } else {
            None
        }
    } else {
        None
    };
    let bath = if needs_system { cx.bath() } else { None };
    let partner = if experiment == Factorize {
        match &raw.partner {
            Some(p) => cx.system("partner", p, StateKind::Random),
            None => system.clone(),
        }
    } else {
        None
    };
    let times = cx.times();
    let needs_times = matches!(experiment, Evolve | PairDynamics) || (experiment == CpCheck && cp_map == CpMap::Generator);
    if needs_times && raw.time.is_none() {
        cx.err("time", "is required for this experiment");
    }
    if experiment == Evolve {
        if let Some(t) = &times {
            if t[0] != 0.0 {
                cx.err("time.start", "evolution starts at t = 0");
            }
        }
    }
    if experiment == OracleCompare {
        if let Some(s) = &system {
            if s.couplings.len() != 1 {
                cx.err("system.couplings", "oracle comparison takes exactly one coupling operator");
            }
        }
    }
    if experiment == PairDynamics {
        let d = system.as_ref().map_or(2, |s| s.hamiltonian.nrows());
        if singlet_probe && d != 2 {
            cx.err("pair.probe", format!("the singlet probe needs two-level systems, got dimension {d}"));
        }
    }
    if cx.diags.is_empty() {
        Ok(Resolved {
            experiment,
            seed: seed_override.or(raw.seed).unwrap_or(0),
            lambda,
            order,
            flavor,
            markov,
            terms,
            system,
            partner,
            bath,
            policy,
            times,
            cp_map,
            cp_dim,
            kraus_count,
            cp_tolerance,
            family,
            singlet_probe,
            pair_tolerance,
            kappas,
            oracle,
        })
    } else {
        Err(cx.diags)
    }
}

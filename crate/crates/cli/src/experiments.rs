//! Experiment runners. Each returns a JSON record and an optional table.

use oqscp::bath::BathModel;
use oqscp::bipartite::{
    factorization_check_with, pair_dynamics_experiment, product_dynamics_check, singlet_state, transposition_demo,
    FactorizationReport, JointSystem, MapFamily, Semigroup, TransposeMixture,
};
use oqscp::channels::{is_completely_positive, kraus_decompose, to_choi, Superoperator};
use oqscp::bath::CrossCorrelationPolicy;
use oqscp::generators::{assemble, evolve, EigenoperatorSet, Flavor, GeneratorOptions, GeneratorReport, Markov};
use oqscp::linalg::{self, c64, DensityMatrix, Operator};
use oqscp::oracle::{
    fit_bath, markov_error, markov_error_with_bath, Interaction, MarkovErrorOptions, MarkovErrorReport, OracleSystem,
};
use oqscp::sampling::{random_density, random_kraus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::resolve::{CpMap, Experiment, Family, Resolved, StateKind, SystemSpec};

/// A numerical failure, tagged with the library module that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{module}: {source}")]
pub struct RunError {
    pub module: &'static str,
    pub source: oqscp::Error,
}

type Run<T> = Result<T, RunError>;

fn in_module(module: &'static str) -> impl Fn(oqscp::Error) -> RunError {
    move |source| RunError { module, source }
}

/// A table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    pub series: Option<Series>,
}

fn matrix_json(m: &Operator) -> Value {
    let part = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
    };
    json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
}

fn rng(cfg: &Resolved, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

fn system_bath(cfg: &Resolved, spec: &SystemSpec) -> BathModel {
    cfg.bath.clone().expect("validated").with_labels(spec.couplings.len())
}

fn eigenoperators(spec: &SystemSpec) -> Run<EigenoperatorSet> {
    EigenoperatorSet::new(&spec.hamiltonian, &spec.couplings).map_err(in_module("generators"))
}

fn initial_state(cfg: &Resolved, spec: &SystemSpec, stream: u64) -> Run<DensityMatrix> {
    let h = &spec.hamiltonian;
    let d = h.nrows();
    let state = match spec.state {
        StateKind::Ground | StateKind::Excited => {
            let s = linalg::eig_hermitian(h).map_err(in_module("linalg"))?;
            let k = if spec.state == StateKind::Ground { 0 } else { d - 1 };
            DensityMatrix::pure(&s.eigenvector(k))
        }
        StateKind::Plus => DensityMatrix::pure(&nalgebra::DVector::from_element(d, c64(1.0, 0.0))),
        StateKind::MaximallyMixed => Ok(DensityMatrix::maximally_mixed(d)),
        StateKind::Gibbs => DensityMatrix::gibbs(h, cfg.bath.as_ref().map_or(1.0, BathModel::beta)),
        StateKind::Random => DensityMatrix::from_operator(random_density(&mut rng(cfg, stream), d)),
    };
    state.map_err(in_module("linalg"))
}

fn generator_options(cfg: &Resolved) -> GeneratorOptions {
    GeneratorOptions {
        lambda: cfg.lambda,
        order: cfg.order,
        flavor: cfg.flavor,
        markov: cfg.markov,
        terms: cfg.terms.clone(),
    }
}

fn build(cfg: &Resolved, spec: &SystemSpec) -> Run<(EigenoperatorSet, GeneratorReport)> {
    let es = eigenoperators(spec)?;
    let report = assemble(&spec.hamiltonian, &es, &system_bath(cfg, spec), generator_options(cfg))
        .map_err(in_module("generators"))?;
    Ok((es, report))
}

/// `τ_S = 1 / (smallest non-zero spacing of distinct Bohr frequencies)` and `τ_R`.
fn timescales(cfg: &Resolved, es: &EigenoperatorSet, bath: &BathModel) -> Value {
    let mut bohr: Vec<f64> = es.entries().iter().map(|v| v.omega).collect();
    bohr.sort_by(f64::total_cmp);
    bohr.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let gap = bohr.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    json!({
        "tau_r": bath.correlation_time(),
        "tau_s": if gap.is_finite() { Some(1.0 / gap) } else { None },
        "lambda_squared": cfg.lambda * cfg.lambda,
    })
}

fn inputs(cfg: &Resolved) -> Value {
    let bath = cfg.bath.as_ref().map(|b| json!({ "kind": b.kind().name(), "beta": b.beta(), "tau_r": b.correlation_time() }));
    json!({
        "lambda": cfg.lambda,
        "order": cfg.order,
        "flavor": cfg.flavor,
        "markov": cfg.markov,
        "terms": cfg.terms,
        "policy": cfg.policy,
        "bath": bath,
        "seed": cfg.seed,
    })
}

pub fn run(cfg: &Resolved) -> Run<Outcome> {
    let outcome = match cfg.experiment {
        Experiment::TransposeDemo => transpose_demo(),
        Experiment::BuildGenerator => build_generator(cfg),
        Experiment::Evolve => evolve_experiment(cfg),
        Experiment::CpCheck => cp_check(cfg),
        Experiment::Factorize => factorize(cfg),
        Experiment::PairDynamics => pair_dynamics(cfg),
        Experiment::OracleCompare => oracle_compare(cfg),
    }?;
    Ok(Outcome {
        result: json!({
            "experiment": cfg.experiment.name(),
            "inputs": inputs(cfg),
            "result": outcome.result,
        }),
        series: outcome.series,
    })
}

fn transpose_demo() -> Run<Outcome> {
    let demo = transposition_demo();
    Ok(Outcome {
        result: json!({
            "input_spectrum": demo.input_spectrum,
            "output_spectrum": demo.output_spectrum,
            "output": matrix_json(&demo.output),
        }),
        series: None,
    })
}

fn build_generator(cfg: &Resolved) -> Run<Outcome> {
    let spec = cfg.system.as_ref().expect("validated");
    let (es, report) = build(cfg, spec)?;
    let l = report.generator();
    let bath = system_bath(cfg, spec);
    let dissipator = &l - &report.l0;
    let gibbs = DensityMatrix::gibbs(&spec.hamiltonian, bath.beta()).map_err(in_module("linalg"))?;
    Ok(Outcome {
        result: json!({
            "dim": l.dim(),
            "provenance": report.provenance,
            "norms": {
                "l0": report.l0.frobenius_norm(),
                "k2": report.k2.frobenius_norm(),
                "k4": report.k4.frobenius_norm(),
                "generator": l.frobenius_norm(),
            },
            "invariants": {
                "trace_annihilation": l.trace_annihilation_error(),
                "hermiticity_preservation": l.hermiticity_preservation_error(),
                "gibbs_residual": dissipator.apply(gibbs.as_operator()).norm(),
            },
            "timescales": timescales(cfg, &es, &bath),
            "generator": matrix_json(l.matrix()),
        }),
        series: None,
    })
}

fn evolve_experiment(cfg: &Resolved) -> Run<Outcome> {
    let spec = cfg.system.as_ref().expect("validated");
    let times = cfg.times.as_ref().expect("validated");
    let (es, report) = build(cfg, spec)?;
    let rho0 = initial_state(cfg, spec, 1)?;
    let traj = evolve(&report, &rho0, times).map_err(in_module("generators"))?;
    let bath = system_bath(cfg, spec);
    let gibbs = DensityMatrix::gibbs(&spec.hamiltonian, bath.beta()).map_err(in_module("linalg"))?;
    let d = spec.hamiltonian.nrows();
    let mut header = vec!["t".to_string(), "tau".to_string()];
    header.extend((0..d).map(|k| format!("eigenvalue_{k}")));
    header.extend(["trace".to_string(), "trace_distance_gibbs".to_string()]);
    let mut rows = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let mut row = vec![t, cfg.lambda * cfg.lambda * t];
        row.extend(&traj.eigenvalues[i]);
        row.push(traj.traces[i].re);
        row.push(linalg::trace_distance(&traj.states[i], gibbs.as_operator()).map_err(in_module("linalg"))?);
        rows.push(row);
    }
    Ok(Outcome {
        result: json!({
            "initial_state": matrix_json(rho0.as_operator()),
            "final_state": matrix_json(traj.states.last().expect("non-empty grid")),
            "min_eigenvalue": traj.min_eigenvalue(),
            "max_trace_error": traj.max_trace_error(),
            "timescales": timescales(cfg, &es, &bath),
        }),
        series: Some(Series { header, rows }),
    })
}

fn cp_check(cfg: &Resolved) -> Run<Outcome> {
    let tol = cfg.cp_tolerance;
    if cfg.cp_map == CpMap::Generator {
        let spec = cfg.system.as_ref().expect("validated");
        let times = cfg.times.as_ref().expect("validated");
        let (_, report) = build(cfg, spec)?;
        let l = report.generator();
        let rows = times
            .par_iter()
            .map(|&t| {
                let map = l.exp(t).map_err(in_module("channels"))?;
                let v = is_completely_positive(&map, tol).map_err(in_module("channels"))?;
                Ok(vec![t, cfg.lambda * cfg.lambda * t, v.min_eigenvalue(), map.trace_preservation_error()])
            })
            .collect::<Run<Vec<Vec<f64>>>>()?;
        let min = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
        let first_violation = rows.iter().find(|r| r[2] < -tol).map(|r| r[0]);
        return Ok(Outcome {
            result: json!({
                "map": "generator",
                "tolerance": tol,
                "completely_positive": first_violation.is_none(),
                "min_choi_eigenvalue": min,
                "first_violation": first_violation,
            }),
            series: Some(Series {
                header: ["t", "tau", "min_choi_eigenvalue", "trace_preservation_error"].map(String::from).to_vec(),
                rows,
            }),
        });
    }
    let d = cfg.cp_dim;
    let (name, map) = match cfg.cp_map {
        CpMap::Identity => ("identity", Superoperator::identity(d)),
        CpMap::Transposition => ("transposition", Superoperator::transposition(d)),
        CpMap::Depolarizing => ("depolarizing", Superoperator::depolarizing(d)),
        CpMap::RandomKraus => {
            let ops = random_kraus(&mut rng(cfg, 2), d, cfg.kraus_count);
            let map = Superoperator::from_fn(d, |x| ops.iter().fold(linalg::zeros(d), |acc, v| acc + v.adjoint() * x * v));
            ("random-kraus", map)
        }
        CpMap::Generator => unreachable!("handled above"),
    };
    let verdict = is_completely_positive(&map, tol).map_err(in_module("channels"))?;
    let spectrum = to_choi(&map).eigenvalues().map_err(in_module("channels"))?;
    let kraus = if verdict.is_cp() {
        let k = kraus_decompose(&map, tol).map_err(in_module("channels"))?;
        let err = (k.to_superoperator().matrix() - map.matrix()).norm();
        json!({ "count": k.len(), "reassembly_error": err })
    } else {
        Value::Null
    };
    Ok(Outcome {
        result: json!({
            "map": name,
            "dim": d,
            "tolerance": tol,
            "completely_positive": verdict.is_cp(),
            "min_choi_eigenvalue": verdict.min_eigenvalue(),
            "choi_spectrum": spectrum,
            "trace_preservation_error": map.trace_preservation_error(),
            "kraus": kraus,
        }),
        series: None,
    })
}

fn factorization_json(r: &FactorizationReport) -> Value {
    json!({
        "order": r.order,
        "kappa": r.kappa,
        "residual": r.residual,
        "coupling_block_norm": r.coupling_block_norm,
        "factorizes": r.factorizes(1e-10),
    })
}

fn factorize(cfg: &Resolved) -> Run<Outcome> {
    let s1 = cfg.system.as_ref().expect("validated");
    let s2 = cfg.partner.as_ref().expect("validated");
    let bath = cfg.bath.clone().expect("validated");
    let sys = JointSystem::new(
        s1.hamiltonian.clone(),
        s2.hamiltonian.clone(),
        s1.couplings.clone(),
        s2.couplings.clone(),
        bath,
        cfg.policy,
        cfg.lambda,
    )
    .map_err(in_module("bipartite"))?;
    let report = factorization_check_with(&sys, cfg.order, &cfg.terms, cfg.markov).map_err(in_module("bipartite"))?;
    let sweep = cfg
        .kappas
        .par_iter()
        .map(|&kappa| {
            let s = sys.with_policy(CrossCorrelationPolicy::Scaled { kappa })?;
            factorization_check_with(&s, cfg.order, &cfg.terms, cfg.markov)
        })
        .collect::<oqscp::Result<Vec<_>>>()
        .map_err(in_module("bipartite"))?;
    let mut result = json!({
        "check": factorization_json(&report),
        "kappa_sweep": sweep.iter().map(factorization_json).collect::<Vec<_>>(),
    });
    let mut series = (!sweep.is_empty()).then(|| Series {
        header: ["kappa", "residual", "coupling_block_norm"].map(String::from).to_vec(),
        rows: sweep.iter().map(|r| vec![r.kappa, r.residual, r.coupling_block_norm]).collect(),
    });
    if let Some(times) = &cfg.times {
        let rho1 = initial_state(cfg, s1, 3)?;
        let rho2 = initial_state(cfg, s2, 4)?;
        let p = product_dynamics_check(&sys, cfg.order, &rho1, &rho2, times).map_err(in_module("bipartite"))?;
        result["product_dynamics"] = json!({ "max_distance": p.max_distance, "points": p.times.len() });
        series = Some(Series {
            header: ["t", "tau", "trace_distance"].map(String::from).to_vec(),
            rows: p.times.iter().zip(&p.distances).map(|(&t, &d)| vec![t, cfg.lambda * cfg.lambda * t, d]).collect(),
        });
    }
    Ok(Outcome { result, series })
}

fn pair_dynamics(cfg: &Resolved) -> Run<Outcome> {
    let times = cfg.times.as_ref().expect("validated");
    let family: Box<dyn MapFamily> = match cfg.family {
        Family::TransposeMixture => {
            Box::new(TransposeMixture { dim: cfg.system.as_ref().map_or(2, |s| s.hamiltonian.nrows()) })
        }
        Family::Davies | Family::Redfield => {
            let spec = cfg.system.as_ref().expect("validated");
            let mut local = cfg.clone();
            local.flavor = if cfg.family == Family::Davies { Flavor::DaviesSecular } else { Flavor::Redfield };
            local.markov = Markov::Infinite;
            let (_, report) = build(&local, spec)?;
            let name = if cfg.family == Family::Davies { "davies" } else { "redfield" };
            Box::new(Semigroup { name: name.into(), generator: report.generator() })
        }
    };
    let d = family.dim();
    let probe = if cfg.singlet_probe {
        singlet_state()
    } else {
        let a = DensityMatrix::from_operator(random_density(&mut rng(cfg, 5), d)).map_err(in_module("linalg"))?;
        let b = DensityMatrix::from_operator(random_density(&mut rng(cfg, 6), d)).map_err(in_module("linalg"))?;
        a.tensor(&b)
    };
    let report = pair_dynamics_experiment(family.as_ref(), &probe, times, cfg.pair_tolerance).map_err(in_module("bipartite"))?;
    let n = d * d;
    let mut header = vec!["t".to_string(), "min_both".to_string(), "min_one_sided".to_string()];
    header.extend((0..n).map(|k| format!("one_sided_{k}")));
    header.extend((0..n).map(|k| format!("both_{k}")));
    let rows = report
        .steps
        .iter()
        .map(|s| {
            let mut row = vec![s.t, s.min_both(), s.min_one_sided()];
            row.extend(&s.one_sided);
            row.extend(&s.both);
            row
        })
        .collect();
    Ok(Outcome {
        result: json!({
            "family": report.family,
            "probe": if cfg.singlet_probe { "singlet" } else { "product" },
            "tolerance": report.tolerance,
            "first_violation_both": report.first_violation_both,
            "first_violation_one_sided": report.first_violation_one_sided,
            "min_both": report.min_both(),
            "min_one_sided": report.min_one_sided(),
        }),
        series: Some(Series { header, rows }),
    })
}

fn oracle_compare(cfg: &Resolved) -> Run<Outcome> {
    let spec = cfg.system.as_ref().expect("validated");
    let model = system_bath(cfg, spec);
    let sys = OracleSystem::new(spec.hamiltonian.clone(), Interaction::Hermitian(spec.couplings[0].clone()))
        .map_err(in_module("oracle"))?;
    let rho0 = initial_state(cfg, spec, 7)?;
    let o = cfg.oracle;
    let opts = MarkovErrorOptions {
        lambda: cfg.lambda,
        horizon: o.horizon,
        points: o.points,
        modes: o.modes,
        cutoff: o.fock_cutoff,
        fit_window: o.fit_window,
        fit_tolerance: o.fit_tolerance,
        flavor: cfg.flavor,
    };
    let (report, accepted): (MarkovErrorReport, bool) = match markov_error(&sys, &model, &rho0, &opts) {
        Ok(r) => (r, true),
        Err(oqscp::Error::FitFailure { .. }) if o.allow_poor_fit => {
            let fit = fit_bath(&model, o.modes, o.fock_cutoff, o.fit_window).map_err(in_module("oracle"))?;
            (markov_error_with_bath(&sys, &model, fit, &rho0, &opts).map_err(in_module("oracle"))?, false)
        }
        Err(e) => return Err(in_module("oracle")(e)),
    };
    let scaling = if o.scaling_probe {
        let at = |lambda: f64| {
            let probe = MarkovErrorOptions { lambda, horizon: lambda * lambda, points: 2, ..opts };
            markov_error_with_bath(&sys, &model, report.fit.clone(), &rho0, &probe).map(|r| r.max_distance)
        };
        let (a, b) = (at(cfg.lambda).map_err(in_module("oracle"))?, at(2.0 * cfg.lambda).map_err(in_module("oracle"))?);
        json!({ "time": 1.0, "distance": a, "distance_doubled": b, "ratio": b / a })
    } else {
        Value::Null
    };
    let rows = report
        .taus
        .iter()
        .zip(&report.times)
        .zip(&report.distances)
        .map(|((&tau, &t), &d)| vec![t, tau, d])
        .collect();
    Ok(Outcome {
        result: json!({
            "fit": report.fit,
            "fit_accepted": accepted,
            "max_distance": report.max_distance,
            "recurrence_time": report.recurrence_time,
            "final_time": report.times.last(),
            "warnings": report.warnings,
            "scaling_probe": scaling,
        }),
        series: Some(Series { header: ["t", "tau", "trace_distance"].map(String::from).to_vec(), rows }),
    })
}

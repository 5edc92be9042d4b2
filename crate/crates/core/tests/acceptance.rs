//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p oqscp --test acceptance`. The process exits 0 and
//! reports failures in its output; set `OQSCP_ACCEPTANCE_STRICT=1` to make any
//! FAIL line turn into a non-zero exit status.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use oqscp::bath::{BathModel, CorrelationTable, CrossCorrelationPolicy, TermRegistry, P1};
use oqscp::bipartite::{
    factorization_check, pair_dynamics_experiment, product_dynamics_check, singlet_state, transposition_demo, JointSystem,
    Semigroup, TransposeMixture,
};
use oqscp::channels::{is_completely_positive, kraus_decompose, Superoperator};
use oqscp::generators::{
    assemble, k2_finite_time, k2_initial_rate, k2_markov, k4_finite_time, k4_markov, secularize, EigenoperatorSet, Flavor,
    GeneratorOptions, Markov,
};
use oqscp::linalg::{self, c64, pauli_x, pauli_z, DensityMatrix, Operator, C64};
use oqscp::oracle::{
    dyson_term, fit_bath, markov_error, markov_error_with_bath, FiniteBath, Interaction, MarkovErrorOptions, Mode,
    OracleSystem,
};
use oqscp::sampling::{random_density, random_kraus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

mod common;
use common::*;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Collects every clause so a failing line still shows the passing ones.
#[derive(Default)]
struct Clauses {
    notes: Vec<String>,
    failed: bool,
}

impl Clauses {
    fn add(&mut self, ok: bool, msg: String) {
        self.failed |= !ok;
        self.notes.push(if ok { msg } else { format!("FAILED {msg}") });
    }

    fn finish(self) -> Check {
        ensure(!self.failed, self.notes.join("; "))
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Partial transpose on the first qubit, written out entrywise.
fn partial_transpose_first(rho: &Operator) -> Operator {
    DMatrix::from_fn(4, 4, |r, c| {
        let (a, x) = (r / 2, r % 2);
        let (b, y) = (c / 2, c % 2);
        rho[(2 * b + x, 2 * a + y)]
    })
}

fn ac1() -> Check {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = nalgebra::DVector::from_vec(vec![linalg::ZERO, c64(s, 0.0), c64(-s, 0.0), linalg::ZERO]);
    let rho = &psi * psi.adjoint();
    let want_in = [0.0, 0.0, 0.0, 1.0];
    let want_out = [-0.5, 0.5, 0.5, 0.5];
    let demo = transposition_demo();
    let mut c = Clauses::default();
    let e_in = max_abs_diff(&sorted(demo.input_spectrum.clone()), &want_in);
    let e_out = max_abs_diff(&sorted(demo.output_spectrum.clone()), &want_out);
    c.add(e_in <= 1e-12, format!("input spectrum error {e_in:.1e}"));
    c.add(e_out <= 1e-12, format!("output spectrum error {e_out:.1e}"));
    let oracle = (demo.output.clone() - partial_transpose_first(&rho)).norm();
    c.add(oracle <= 1e-12, format!("entrywise partial-transpose oracle {oracle:.1e}"));
    c.finish()
}

fn ac2() -> Check {
    let mut c = Clauses::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2001);
    for d in [2, 3, 4] {
        let v = is_completely_positive(&Superoperator::identity(d), 1e-12).map_err(|e| e.to_string())?;
        c.add(v.is_cp(), format!("identity d={d} min {:.1e}", v.min_eigenvalue()));
    }
    let mut worst_reassembly: f64 = 0.0;
    let mut all_cp = true;
    for trial in 0..20 {
        let d = 2 + trial % 3;
        let ops = random_kraus(&mut rng, d, 1 + trial % 4);
        let map = Superoperator::from_fn(d, |x| {
            ops.iter().fold(linalg::zeros(d), |acc, v| acc + v.adjoint() * x * v)
        });
        let v = is_completely_positive(&map, 1e-10).map_err(|e| e.to_string())?;
        all_cp &= v.is_cp();
        let kraus = kraus_decompose(&map, 1e-10).map_err(|e| e.to_string())?;
        let rebuilt = Superoperator::from_fn(d, |x| {
            kraus.operators.iter().fold(linalg::zeros(d), |acc, v| acc + v.adjoint() * x * v)
        });
        worst_reassembly = worst_reassembly.max((rebuilt.matrix() - map.matrix()).norm());
    }
    c.add(all_cp, "20 random Kraus maps certified CP".into());
    c.add(worst_reassembly <= 1e-9, format!("Kraus reassembly error {worst_reassembly:.1e}"));
    let t = is_completely_positive(&Superoperator::transposition(2), 1e-12).map_err(|e| e.to_string())?;
    let err = (t.min_eigenvalue() + 1.0).abs();
    c.add(!t.is_cp() && err <= 1e-12, format!("transposition min Choi eigenvalue {:.12}", t.min_eigenvalue()));
    c.finish()
}

fn ac3() -> Check {
    let reg = TermRegistry::standard();
    let terms = TermRegistry::default_terms();
    let b = bath();
    let results: Vec<(f64, f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|n| {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + n);
            let d = 2 + (n % 2) as usize;
            let (_, es) = random_system(&mut rng, d);
            let ks = [
                k2_markov(&es, &b).unwrap(),
                k2_finite_time(&es, &b, 0.9).unwrap(),
                k4_markov(&es, &b, &reg, &terms).unwrap(),
                k4_finite_time(&es, &b, &reg, &terms, 0.9).unwrap(),
            ];
            let (mut tr, mut herm) = (0.0f64, 0.0f64);
            for k in &ks {
                let (a, h) = invariant_errors(k, &mut rng);
                tr = tr.max(a);
                herm = herm.max(h);
            }
            let want = k4_oracle(&es, true);
            let brute = (ks[2].matrix() - &want).norm() / want.norm().max(1.0);
            (tr, herm, brute)
        })
        .collect();
    let tr = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let herm = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let brute = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let mut c = Clauses::default();
    c.add(tr <= 1e-10, format!("trace annihilation {tr:.1e}"));
    c.add(herm <= 1e-10, format!("hermiticity preservation {herm:.1e}"));
    c.add(brute <= 1e-9, format!("K4 vs brute-force tuple sum {brute:.1e}"));
    c.finish()
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite Gauss–Legendre over the cube `[0, len]^3`.
fn cube_quadrature(f: impl Fn([f64; 3]) -> C64 + Sync, len: f64, panels: usize) -> C64 {
    let rule = gauss_legendre(16);
    let h = len / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| rule.iter().map(move |&(x, w)| (h * (p as f64 + 0.5 * (x + 1.0)), 0.5 * h * w)))
        .collect();
    nodes
        .par_iter()
        .map(|&(t1, w1)| {
            let mut acc = linalg::ZERO;
            for &(t2, w2) in &nodes {
                for &(t3, w3) in &nodes {
                    acc += f([t1, t2, t3]) * (w1 * w2 * w3);
                }
            }
            acc
        })
        .sum()
}

fn ac4() -> Check {
    let mut c = Clauses::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4001);
    let b = bath();
    let (_, es) = random_system(&mut rng, 3);
    let diff = (k2_finite_time(&es, &b, 40.0 * TAU).unwrap().matrix() - k2_markov(&es, &b).unwrap().matrix()).norm();
    c.add(diff <= 1e-6, format!("|K2(40 tau) - K2| = {diff:.1e}"));
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let delta: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let closed = b.triple_transform(&P1, [0; 4], delta).map_err(|e| e.to_string())?;
        let nested = cube_quadrature(
            |t| {
                let phase = C64::from_polar(1.0, -(delta[0] * t[0] + delta[1] * t[1] + delta[2] * t[2]));
                b.fourth_order_kernel(&P1, [0; 4], t).unwrap() * phase
            },
            30.0 * TAU,
            12,
        );
        worst = worst.max((closed - nested).norm() / closed.norm());
    }
    c.add(worst <= 1e-4, format!("triple transform vs nested quadrature {worst:.1e} relative at 10 points"));
    c.finish()
}

fn ac5() -> Check {
    let beta = 1.5;
    let h = pauli_z() * c64(0.5, 0.0);
    let es = EigenoperatorSet::new(&h, &[pauli_x()]).map_err(|e| e.to_string())?;
    let ohmic = BathModel::ohmic(beta, 0.1, 5.0).map_err(|e| e.to_string())?;
    let k = secularize(&k2_markov(&es, &ohmic).map_err(|e| e.to_string())?, &es);
    let gibbs = DensityMatrix::gibbs(&h, beta).map_err(|e| e.to_string())?;
    let mut c = Clauses::default();
    let fixed = k.apply(gibbs.as_operator()).norm();
    c.add(fixed <= 1e-6, format!("|K[Gibbs]| = {fixed:.1e}"));
    let report = assemble(
        &h,
        &es,
        &ohmic,
        GeneratorOptions { lambda: 0.3, flavor: Flavor::DaviesSecular, ..Default::default() },
    )
    .map_err(|e| e.to_string())?;
    for t in [0.1, 1.0, 10.0] {
        let v = is_completely_positive(&report.generator().exp(t).map_err(|e| e.to_string())?, 1e-9)
            .map_err(|e| e.to_string())?;
        c.add(v.min_eigenvalue() >= -1e-9, format!("t={t} min Choi {:.1e}", v.min_eigenvalue()));
    }
    c.finish()
}

fn ac6() -> Check {
    let mut c = Clauses::default();
    let zero = JointSystem::witness(CrossCorrelationPolicy::Zero);
    let full = JointSystem::witness(CrossCorrelationPolicy::Full);
    for order in [2, 4] {
        let r = factorization_check(&zero, order, Markov::Infinite).map_err(|e| e.to_string())?;
        c.add(r.residual <= 1e-10, format!("zero policy order {order} residual {:.1e}", r.residual));
        let r = factorization_check(&full, order, Markov::Infinite).map_err(|e| e.to_string())?;
        c.add(r.residual > 1e-3, format!("full policy order {order} residual {:.3e}", r.residual));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6001);
    let rho1 = DensityMatrix::from_operator(random_density(&mut rng, 2)).map_err(|e| e.to_string())?;
    let rho2 = DensityMatrix::from_operator(random_density(&mut rng, 2)).map_err(|e| e.to_string())?;
    let times: Vec<f64> = (0..20).map(|i| i as f64 * 2.0).collect();
    let r = product_dynamics_check(&zero, 4, &rho1, &rho2, &times).map_err(|e| e.to_string())?;
    c.add(r.max_distance <= 1e-8, format!("product dynamics distance {:.1e} on 20 points", r.max_distance));
    c.finish()
}

fn ac7() -> Check {
    let mut c = Clauses::default();
    let singlet = singlet_state();
    let step = 1e-5;
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * step).collect();
    let threshold = 1e-6;
    let report = pair_dynamics_experiment(&TransposeMixture { dim: 2 }, &singlet, &times, threshold)
        .map_err(|e| e.to_string())?;
    // Independent grid oracle: the mixture is p ρ + (1 - p) ρ^{T_A}.
    let oracle = times.iter().copied().find(|&t| {
        let p = (1.0 + (-t).exp()) / 2.0;
        let m = singlet.as_operator() * c64(p, 0.0) + partial_transpose_first(singlet.as_operator()) * c64(1.0 - p, 0.0);
        linalg::eigvalsh(&m).unwrap()[0] < -threshold
    });
    match (report.first_violation_one_sided, oracle) {
        (Some(found), Some(want)) => {
            c.add((found - want).abs() <= step * (1.0 + 1e-9), format!("t* = {found:.2e} (oracle {want:.2e})"));
            let beyond = report.steps.iter().filter(|s| s.t >= found).all(|s| s.min_one_sided() < -threshold);
            c.add(beyond, "negative eigenvalue persists beyond t*".into());
        }
        other => c.add(false, format!("violation not detected: {other:?}")),
    }

    let h = pauli_z() * c64(0.5, 0.0);
    let es = EigenoperatorSet::new(&h, &[pauli_x()]).map_err(|e| e.to_string())?;
    let ohmic = BathModel::ohmic(1.0, 0.1, 5.0).map_err(|e| e.to_string())?;
    let k = secularize(&k2_markov(&es, &ohmic).map_err(|e| e.to_string())?, &es);
    let generator = &Superoperator::hamiltonian(&h) + &(&k * 0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    let u = oqscp::sampling::random_unitary(&mut rng, 2);
    let families = [
        Semigroup { name: "davies".into(), generator },
        Semigroup { name: "hamiltonian".into(), generator: Superoperator::hamiltonian(&(&u + u.adjoint())) },
    ];
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    for f in &families {
        let r = pair_dynamics_experiment(f, &singlet, &grid, 1e-9).map_err(|e| e.to_string())?;
        let cp = is_completely_positive(&f.generator.exp(grid[1]).map_err(|e| e.to_string())?, 1e-9)
            .map_err(|e| e.to_string())?;
        let min = r.min_one_sided().min(r.min_both());
        c.add(cp.is_cp() && min >= -1e-9, format!("{} family min eigenvalue {min:.1e}", f.name));
    }
    c.finish()
}

fn ac8() -> Check {
    let mut c = Clauses::default();
    let sys = OracleSystem::new(pauli_z() * c64(0.5, 0.0), Interaction::Hermitian(pauli_x())).map_err(|e| e.to_string())?;

    // Dyson term against the generator-side expansion on a small finite bath.
    let small = FiniteBath::new(
        vec![Mode { frequency: 0.8, coupling: 0.6, cutoff: 5 }, Mode { frequency: 1.3, coupling: 0.4, cutoff: 5 }],
        4.0,
    )
    .map_err(|e| e.to_string())?;
    let samples = (0..=200).map(|i| small.truncated_correlation(i as f64 * 0.01)).collect();
    let table = CorrelationTable::from_samples(0.01, samples).map_err(|e| e.to_string())?;
    let model = BathModel::tabulated(small.beta(), table).map_err(|e| e.to_string())?;
    let es = EigenoperatorSet::new(&sys.h_s, &[pauli_x()]).map_err(|e| e.to_string())?;
    let t = 1e-5;
    let w2 = dyson_term(&sys, &small, 2, t).map_err(|e| e.to_string())?.value;
    let want = k2_initial_rate(&es, &model).map_err(|e| e.to_string())?.matrix() * c64(t * t / 2.0, 0.0);
    let rel = (w2.matrix() - &want).norm() / want.norm();
    c.add(rel <= 1e-4, format!("Dyson n=2 vs small-t expansion {rel:.1e} relative"));

    // Two-level system against a 3-mode fit of an ohmic bath.
    let ohmic = BathModel::ohmic(10.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rho0 = DensityMatrix::pure(&nalgebra::DVector::from_element(2, c64(s, 0.0))).map_err(|e| e.to_string())?;
    let opts = MarkovErrorOptions::default();
    match markov_error(&sys, &ohmic, &rho0, &opts) {
        Ok(r) => c.add(
            r.max_distance <= 0.05,
            format!("max trace distance {:.3} over tau in [0, 1] (fit residual {:.3})", r.max_distance, r.fit.residual),
        ),
        Err(e) => {
            // Diagnostic run with the best available fit, whatever its residual.
            let fit = fit_bath(&ohmic, opts.modes, opts.cutoff, opts.fit_window).map_err(|e| e.to_string())?;
            let residual = fit.residual;
            let diag = markov_error_with_bath(&sys, &ohmic, fit.clone(), &rho0, &opts).map_err(|e| e.to_string())?;
            c.add(
                false,
                format!(
                    "max trace distance: {e}; best 3-mode fit residual {residual:.3}, distance with that fit {:.3}, bath recurrence time {:.2} vs final time {:.0}",
                    diag.max_distance,
                    diag.recurrence_time,
                    diag.times.last().unwrap()
                ),
            );
        }
    }

    // Early-time scaling probe at t = 1 with the best fit.
    let fit = fit_bath(&ohmic, opts.modes, opts.cutoff, opts.fit_window).map_err(|e| e.to_string())?;
    let at = |lambda: f64| -> std::result::Result<f64, String> {
        let o = MarkovErrorOptions { lambda, horizon: lambda * lambda, points: 2, ..opts };
        Ok(markov_error_with_bath(&sys, &ohmic, fit.clone(), &rho0, &o).map_err(|e| e.to_string())?.max_distance)
    };
    let ratio = at(0.1)? / at(0.05)?;
    c.add((2.5..=6.0).contains(&ratio), format!("lambda-doubling error ratio {ratio:.2}"));
    c.finish()
}

fn main() {
    let criteria: [(&str, fn() -> Check, Duration); 8] = [
        ("AC1 transposition counterexample", ac1, Duration::from_secs(1)),
        ("AC2 CP certification", ac2, Duration::from_secs(5)),
        ("AC3 generator invariants", ac3, Duration::from_secs(120)),
        ("AC4 Markov-limit convergence", ac4, Duration::from_secs(60)),
        ("AC5 secular CP semigroup", ac5, Duration::from_secs(30)),
        ("AC6 factorization", ac6, Duration::from_secs(120)),
        ("AC7 entanglement positivity", ac7, Duration::from_secs(30)),
        ("AC8 oracle validation", ac8, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (mut pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let timing = if elapsed <= budget {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            pass = false;
            format!("{:.2}s exceeds {}s budget", elapsed.as_secs_f64(), budget.as_secs())
        };
        failures += usize::from(!pass);
        println!("{} {name} [{timing}]: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of 8 criteria passed", 8 - failures);
    if failures > 0 && std::env::var("OQSCP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

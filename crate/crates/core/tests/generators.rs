use approx::assert_abs_diff_eq;
use oqscp::bath::{BathModel, TermId, TermRegistry};
use oqscp::channels::{is_completely_positive, Superoperator};
use oqscp::generators::{
    assemble, evolve, evolve_with, k2_finite_time, k2_initial_rate, k2_markov, k4_finite_time, k4_markov, secularize,
    EigenoperatorSet, Flavor, GeneratorOptions, Integrator, Markov,
};
use oqscp::linalg::{self, c64, pauli_x, pauli_z, DensityMatrix};
use oqscp::sampling::{random_density, random_hermitian};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn reconstruction_reproduces_couplings() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [2, 3, 4] {
        let h = random_hermitian(&mut rng, d);
        let a = random_hermitian(&mut rng, d);
        let b = random_hermitian(&mut rng, d);
        let es = EigenoperatorSet::new(&h, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(es.len(), d * d);
        assert!((es.reconstruct(0) - a).norm() < 1e-12);
        assert!((es.reconstruct(1) - b).norm() < 1e-12);
    }
}

#[test]
fn k2_matches_direct_sum() {
    let r = 1.0 / TAU;
    let coef = |w: f64| c64(G, 0.0) / c64(r, w);
    let es = EigenoperatorSet::new(&two_level(1.3), &[pauli_x()]).unwrap();
    let k2 = k2_markov(&es, &bath()).unwrap();
    assert!((k2.matrix() - k2_oracle(&es, coef)).norm() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (_, es) = random_system(&mut rng, 3);
    let k2 = k2_markov(&es, &bath()).unwrap();
    assert!((k2.matrix() - k2_oracle(&es, coef)).norm() < 1e-12);
}

#[test]
fn k2_finite_time_closed_form_coefficients() {
    let r = 1.0 / TAU;
    let t = 1.7;
    let coef = |w: f64| {
        let z = c64(r, w);
        c64(G, 0.0) * (c64(1.0, 0.0) - (-z * t).exp()) / z
    };
    let es = EigenoperatorSet::new(&two_level(0.9), &[pauli_x()]).unwrap();
    let k2 = k2_finite_time(&es, &bath(), t).unwrap();
    assert!((k2.matrix() - k2_oracle(&es, coef)).norm() < 1e-12);
}

#[test]
fn k4_matches_brute_force_tuple_sum() {
    let reg = TermRegistry::standard();
    let es = EigenoperatorSet::new(&two_level(1.3), &[pauli_x()]).unwrap();
    let p1 = k4_markov(&es, &bath(), &reg, &[TermId::P1]).unwrap();
    assert!((p1.matrix() - k4_oracle(&es, false)).norm() < 1e-9);
    let full = k4_markov(&es, &bath(), &reg, &TermRegistry::default_terms()).unwrap();
    assert!((full.matrix() - k4_oracle(&es, true)).norm() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in [2, 3] {
        let (_, es) = random_system(&mut rng, d);
        let full = k4_markov(&es, &bath(), &reg, &TermRegistry::default_terms()).unwrap();
        let want = k4_oracle(&es, true);
        assert!((full.matrix() - &want).norm() < 1e-9 * want.norm().max(1.0));
    }
}

#[test]
fn commuting_tuples_contribute_nothing() {
    // A diagonal coupling only touches the commuting projectors |r⟩⟨r|.
    let reg = TermRegistry::standard();
    let es = EigenoperatorSet::new(&two_level(1.0), &[pauli_z()]).unwrap();
    let k4 = k4_markov(&es, &bath(), &reg, &TermRegistry::default_terms()).unwrap();
    assert_eq!(k4.frobenius_norm(), 0.0);
}

#[test]
fn invariants_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reg = TermRegistry::standard();
    let terms = TermRegistry::default_terms();
    let b = bath();
    for n in 0..20 {
        let d = 2 + n % 2;
        let (_, es) = random_system(&mut rng, d);
        let ks = [
            k2_markov(&es, &b).unwrap(),
            k2_finite_time(&es, &b, 0.9).unwrap(),
            k4_markov(&es, &b, &reg, &terms).unwrap(),
            k4_finite_time(&es, &b, &reg, &terms, 0.9).unwrap(),
        ];
        for k in &ks {
            let (tr, herm) = invariant_errors(k, &mut rng);
            assert!(tr <= 1e-10, "trace {tr}");
            assert!(herm <= 1e-10, "hermiticity {herm}");
        }
    }
}

#[test]
fn finite_time_k2_converges_to_markov() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (_, es) = random_system(&mut rng, 3);
    let markov = k2_markov(&es, &bath()).unwrap();
    let finite = k2_finite_time(&es, &bath(), 40.0 * TAU).unwrap();
    assert!((finite.matrix() - markov.matrix()).norm() <= 1e-6);
    // Ohmic kind converges more slowly (algebraic tail) but does converge.
    let ohmic = BathModel::ohmic(2.0, 0.1, 4.0).unwrap();
    let m = k2_markov(&es, &ohmic).unwrap();
    let near = k2_finite_time(&es, &ohmic, 200.0).unwrap();
    let far = k2_finite_time(&es, &ohmic, 800.0).unwrap();
    let e1 = (near.matrix() - m.matrix()).norm();
    let e2 = (far.matrix() - m.matrix()).norm();
    assert!(e2 < e1 && e2 < 1e-3, "{e1} {e2}");
}

#[test]
fn initial_rate_is_the_slope_at_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (_, es) = random_system(&mut rng, 2);
    let rate = k2_initial_rate(&es, &bath()).unwrap();
    let h = 1e-6;
    let k = k2_finite_time(&es, &bath(), h).unwrap();
    assert!((k.matrix() / c64(h, 0.0) - rate.matrix()).norm() < 1e-5 * rate.frobenius_norm());
}

#[test]
fn k4_finite_time_reaches_markov_coefficient() {
    // Δ = 0 sector: a degenerate-free system is not needed, only the
    // zero-frequency coefficient, exposed through the bath directly.
    let b = bath();
    let v = b.p1_base_finite_transform([0.0; 3], 60.0 * TAU).unwrap();
    assert!((v - c64(G * G * TAU.powi(3) / 2.0, 0.0)).norm() < 1e-3);

    let reg = TermRegistry::standard();
    let es = EigenoperatorSet::new(&two_level(1.1), &[pauli_x()]).unwrap();
    let markov = k4_markov(&es, &b, &reg, &TermRegistry::default_terms()).unwrap();
    let finite = k4_finite_time(&es, &b, &reg, &TermRegistry::default_terms(), 60.0 * TAU).unwrap();
    assert!((finite.matrix() - markov.matrix()).norm() < 1e-6 * markov.frobenius_norm().max(1.0));
}

#[test]
fn k4_finite_time_is_continuous() {
    let reg = TermRegistry::standard();
    let es = EigenoperatorSet::new(&two_level(1.1), &[pauli_x()]).unwrap();
    let terms = TermRegistry::default_terms();
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
    let ks: Vec<Superoperator> =
        grid.iter().map(|&t| k4_finite_time(&es, &bath(), &reg, &terms, t).unwrap()).collect();
    for w in ks.windows(3) {
        let jump = (w[1].matrix() - w[0].matrix()).norm();
        let next = (w[2].matrix() - w[1].matrix()).norm();
        // Steps of equal size produce comparable increments.
        assert!(jump < 0.2 && (jump - next).abs() < 0.05, "{jump} {next}");
    }
}

#[test]
fn secular_generator_is_cp_and_fixes_gibbs() {
    let beta = 1.5;
    let h = two_level(1.0);
    let es = EigenoperatorSet::new(&h, &[pauli_x()]).unwrap();
    let ohmic = BathModel::ohmic(beta, 0.1, 5.0).unwrap();
    let k = secularize(&k2_markov(&es, &ohmic).unwrap(), &es);
    let gibbs = DensityMatrix::gibbs(&h, beta).unwrap();
    assert!(k.apply(gibbs.as_operator()).norm() <= 1e-6);

    let report = assemble(
        &h,
        &es,
        &ohmic,
        GeneratorOptions { lambda: 0.3, flavor: Flavor::DaviesSecular, ..Default::default() },
    )
    .unwrap();
    let l = report.generator();
    for t in [0.1, 1.0, 10.0] {
        let verdict = is_completely_positive(&l.exp(t).unwrap(), 1e-9).unwrap();
        assert!(verdict.is_cp(), "t={t}: {}", verdict.min_eigenvalue());
    }

    // Populations relax monotonically toward the Gibbs ratio.
    let excited = DensityMatrix::pure(&linalg::ket(2, 0)).unwrap();
    let times: Vec<f64> = (0..=30).map(|i| i as f64 * 20.0).collect();
    let traj = evolve(&report, &excited, &times).unwrap();
    let dists: Vec<f64> =
        traj.states.iter().map(|s| linalg::trace_distance(s, gibbs.as_operator()).unwrap()).collect();
    assert!(dists.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(dists.last().unwrap() < &1e-3);
    let last = traj.states.last().unwrap();
    assert_abs_diff_eq!(last[(0, 0)].re / last[(1, 1)].re, (-beta).exp(), epsilon = 1e-3);
}

#[test]
fn secularizing_a_secular_map_changes_nothing() {
    let es = EigenoperatorSet::new(&two_level(1.0), &[pauli_x()]).unwrap();
    let k = secularize(&k2_markov(&es, &bath()).unwrap(), &es);
    let again = secularize(&k, &es);
    assert!((again.matrix() - k.matrix()).norm() < 1e-14);
    // Hamiltonian flows are frequency-preserving already.
    let l0 = Superoperator::hamiltonian(&two_level(1.0));
    assert!((secularize(&l0, &es).matrix() - l0.matrix()).norm() < 1e-14);
}

#[test]
fn exponential_and_ode_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (h, es) = random_system(&mut rng, 3);
    let report = assemble(&h, &es, &bath(), GeneratorOptions { lambda: 0.4, order: 4, ..Default::default() }).unwrap();
    let rho = DensityMatrix::from_operator(random_density(&mut rng, 3)).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
    let a = evolve_with(&report, &rho, &times, Integrator::Exponential).unwrap();
    let b = evolve_with(&report, &rho, &times, Integrator::RungeKutta).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!(linalg::trace_distance(x, y).unwrap() <= 1e-7);
    }
    assert!(a.max_trace_error() < 1e-9 && b.max_trace_error() < 1e-9);
}

#[test]
fn finite_time_evolution_tracks_markov_at_long_times() {
    let h = two_level(1.0);
    let es = EigenoperatorSet::new(&h, &[pauli_x()]).unwrap();
    let rho = DensityMatrix::pure(&linalg::ket(2, 0)).unwrap();
    let times: Vec<f64> = (0..=8).map(|i| i as f64).collect();
    let opts = GeneratorOptions { lambda: 0.3, markov: Markov::Finite { t: 0.0 }, ..Default::default() };
    let finite = assemble(&h, &es, &bath(), opts).unwrap();
    let traj = evolve(&finite, &rho, &times).unwrap();
    assert!(traj.max_trace_error() < 1e-9);
    let markov = assemble(&h, &es, &bath(), GeneratorOptions { lambda: 0.3, ..Default::default() }).unwrap();
    let reference = evolve(&markov, &rho, &times).unwrap();
    let d = linalg::trace_distance(traj.states.last().unwrap(), reference.states.last().unwrap()).unwrap();
    // Memory only matters during the first few correlation times.
    assert!(d < 0.05, "{d}");
}

#[test]
fn weak_coupling_norm_ordering() {
    let h = two_level(1.0);
    let es = EigenoperatorSet::new(&h, &[pauli_x()]).unwrap();
    let report = assemble(&h, &es, &bath(), GeneratorOptions { order: 4, ..Default::default() }).unwrap();
    let l2 = report.lambda.powi(2) * report.k2.frobenius_norm();
    let l4 = report.lambda.powi(4) * report.k4.frobenius_norm();
    assert!(l4 < 1e-2 * l2, "{l4} vs {l2}");
    assert_eq!(report.provenance.len(), 3);
    assert_eq!(report.terms, TermRegistry::default_terms());
}

#[test]
fn order_four_with_vanishing_fourth_order_products_is_order_two() {
    let h = two_level(1.0);
    let es = EigenoperatorSet::new(&h, &[pauli_z()]).unwrap();
    let two = assemble(&h, &es, &bath(), GeneratorOptions::default()).unwrap();
    let four = assemble(&h, &es, &bath(), GeneratorOptions { order: 4, ..Default::default() }).unwrap();
    assert_eq!(two.generator().matrix(), four.generator().matrix());
}

#[test]
fn joint_eigenoperators_embed_both_factors() {
    let es1 = EigenoperatorSet::new(&two_level(1.0), &[pauli_x()]).unwrap();
    let es2 = EigenoperatorSet::new(&two_level(1.4), &[pauli_z()]).unwrap();
    let joint = EigenoperatorSet::joint(&es1, &es2);
    assert_eq!((joint.dim(), joint.labels(), joint.len()), (4, 2, 8));
    assert!((joint.reconstruct(0) - linalg::kron(&pauli_x(), &linalg::identity(2))).norm() < 1e-12);
    assert!((joint.reconstruct(1) - linalg::kron(&linalg::identity(2), &pauli_z())).norm() < 1e-12);
    let u = joint.basis();
    let h = linalg::kron(&two_level(1.0), &linalg::identity(2)) + linalg::kron(&linalg::identity(2), &two_level(1.4));
    let diag = u.adjoint() * h * u;
    for (i, e) in joint.energies().iter().enumerate() {
        assert_abs_diff_eq!(diag[(i, i)].re, *e, epsilon = 1e-12);
    }
}

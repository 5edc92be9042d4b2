//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::DMatrix;
use oqscp::bath::BathModel;
use oqscp::channels::Superoperator;
use oqscp::generators::EigenoperatorSet;
use oqscp::linalg::{self, c64, pauli_z, Operator, C64};
use oqscp::sampling::random_hermitian;
use rand_chacha::ChaCha8Rng;

pub const G: f64 = 0.7;
pub const TAU: f64 = 0.8;

pub fn bath() -> BathModel {
    BathModel::exponential(1.0, G, TAU).unwrap()
}

pub fn two_level(w0: f64) -> Operator {
    pauli_z() * c64(w0 / 2.0, 0.0)
}

/// Superoperator matrix of `f` built column by column from its action on
/// matrix units, independent of the kron-based assembly.
pub fn matrix_of(d: usize, f: impl Fn(&Operator) -> Operator) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for i in 0..d {
            let out = f(&linalg::basis_matrix(d, i, j));
            for b in 0..d {
                for a in 0..d {
                    m[(a + d * b, i + d * j)] = out[(a, b)];
                }
            }
        }
    }
    m
}

/// Direct double sum over (j, k) with the exponential closed form.
pub fn k2_oracle(es: &EigenoperatorSet, coef: impl Fn(f64) -> C64) -> DMatrix<C64> {
    let d = es.dim();
    matrix_of(d, |rho| {
        let mut out = linalg::zeros(d);
        for vj in es.entries() {
            for vk in es.entries() {
                let wj = vj.weights[0];
                let wk = vk.weights[0];
                let c = coef(vj.omega);
                let plus = c * wk * wj;
                // Real symmetric single-label bath: Ω̂⁻ at ω_j equals Ω̂⁺.
                let minus = c * wj * wk;
                let a = &vj.op * rho;
                out += (&a * &vk.op - &vk.op * &a) * plus;
                let b = rho * &vj.op;
                out += (&vk.op * &b - &b * &vk.op) * minus;
            }
        }
        out
    })
}

/// Brute-force p = 1 tuple sum plus its hermitian mirror, all d⁴ tuples.
pub fn k4_oracle(es: &EigenoperatorSet, with_mirror: bool) -> DMatrix<C64> {
    let d = es.dim();
    let r = 1.0 / TAU;
    let omega = |delta: [f64; 3]| {
        c64(G * G, 0.0) / (c64(r, delta[0]) * c64(2.0 * r, delta[1]) * c64(r, delta[2]))
    };
    let e = es.entries();
    let p1 = |rho: &Operator| {
        let mut out = linalg::zeros(d);
        for vj in e {
            for vk in e {
                for vl in e {
                    for vm in e {
                        let w = vj.weights[0] * vk.weights[0] * vl.weights[0] * vm.weights[0];
                        let c = w * omega([vk.omega + vl.omega + vm.omega, vl.omega + vm.omega, vm.omega]);
                        let inner = (&vk.op * &vl.op - &vl.op * &vk.op) * &vm.op * rho;
                        out += (&vj.op * &inner - &inner * &vj.op) * c;
                    }
                }
            }
        }
        out
    };
    let mut m = matrix_of(d, p1);
    if with_mirror {
        m += matrix_of(d, |x| p1(&x.adjoint()).adjoint());
    }
    m
}

pub fn random_system(rng: &mut ChaCha8Rng, d: usize) -> (Operator, EigenoperatorSet) {
    let h = random_hermitian(rng, d);
    let a = random_hermitian(rng, d);
    let es = EigenoperatorSet::new(&h, &[a]).unwrap();
    (h, es)
}

pub fn invariant_errors(k: &Superoperator, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let d = k.dim();
    let mut tr: f64 = 0.0;
    let mut herm: f64 = 0.0;
    for _ in 0..10 {
        let x = oqscp::sampling::ginibre(rng, d, d);
        tr = tr.max(linalg::trace(&k.apply(&x)).norm());
        herm = herm.max((k.apply(&x.adjoint()) - k.apply(&x).adjoint()).norm());
    }
    (tr, herm)
}


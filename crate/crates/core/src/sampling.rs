//! Seeded random operators, states and channels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c64, expm, projector, Operator, C64, I};

/// Complex Ginibre matrix with standard normal entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    let a = ginibre(rng, d, d);
    (&a + a.adjoint()) * c64(0.5, 0.0)
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    expm(&(random_hermitian(rng, d) * I)).expect("bounded Hermitian generator")
}

/// Haar-random unit vector.
pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<C64> {
    let v: DVector<C64> = DVector::from_fn(d, |_, _| {
        c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let n = v.norm();
    v / c64(n, 0.0)
}

/// Random full-rank density matrix `G G† / Tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    let g = ginibre(rng, d, d);
    let p = &g * g.adjoint();
    let tr = p.trace();
    p / tr
}

pub fn random_pure_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    projector(&random_pure_state(rng, d))
}

/// `count` random Kraus operators forming a trace-preserving channel in the
/// `Σ V† X V` orientation (`Σ V V† = 1`).
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, d: usize, count: usize) -> Vec<Operator> {
    let stacked = ginibre(rng, d * count, d);
    // Orthonormalize the stacked isometry so that Σ K_l† K_l = 1.
    let qr = stacked.qr();
    let q = qr.q();
    (0..count)
        .map(|l| q.view((l * d, 0), (d, d)).into_owned().adjoint())
        .collect()
}

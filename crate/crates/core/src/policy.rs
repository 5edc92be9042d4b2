//! Centralized numerical tolerances.

use serde::{Deserialize, Serialize};

/// One record holding every tolerance the library checks against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    /// Max entrywise asymmetry |A - A^dagger| accepted as Hermitian. Scaled by
    /// `max(1, max|A_ij|)` so that large Hamiltonians are not rejected for
    /// round-off.
    pub hermiticity: f64,
    /// Slack below zero still counted as positive semidefinite.
    pub psd_slack: f64,
    /// Relative reconstruction error accepted from an eigendecomposition.
    pub reconstruction: f64,
    /// Smallest level gap of a system Hamiltonian that counts as non-degenerate.
    pub degeneracy: f64,
    /// Two Bohr frequencies closer than this are considered equal.
    pub secular: f64,
}

impl NumericPolicy {
    pub const DEFAULT: NumericPolicy = NumericPolicy {
        hermiticity: 1e-12,
        psd_slack: 1e-10,
        reconstruction: 1e-10,
        degeneracy: 1e-10,
        secular: 1e-10,
    };
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

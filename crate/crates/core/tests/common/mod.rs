//! Shared helpers for integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qperc::quantum::{haar_unitary, DensityMatrix, GateOp, C64};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// `G G^dagger / tr` for a `2^n x rank` complex Gaussian `G`.
pub fn random_mixed(n: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let d = 1 << n;
    let g = DMatrix::from_fn(d, rank, |_, _| gaussian(rng));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::from_matrix(&(m / tr)).unwrap()
}

pub fn random_state_vector(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    qperc::quantum::random_pure_state(n, rng)
}

pub fn random_unitary_gate(qubit: usize, rng: &mut impl Rng) -> GateOp {
    let u: [C64; 4] = haar_unitary(2, rng).try_into().unwrap();
    GateOp::Single { qubit, u }
}

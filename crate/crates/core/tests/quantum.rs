//! Density-matrix engine against dense linear-algebra oracles.

mod common;

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_mixed, random_unitary_gate};
use qperc::lattice::LatticeSpec;
use qperc::quantum::{
    apply_gate, apply_noise_channel, evolve_circuit, evolve_trajectory, ghz_circuit, ghz_state,
    haar_unitary, random_circuit, read_density, reduced_density_matrix, unitarity_error,
    write_density, DensityMatrix, EvolveOptions, GateOp, NoiseChannelSpec, NoiseModel, C64,
};

const TOL: f64 = 1e-12;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Bit of `qubit` in basis index `i` of an `n`-qubit register (qubit 0 is
/// the most significant).
fn bit(i: usize, qubit: usize, n: usize) -> usize {
    (i >> (n - 1 - qubit)) & 1
}

/// Full `2^n` matrix of a `2^k x 2^k` operator `u` on `qubits`
/// (`qubits[0]` most significant in `u`), built entry by entry.
fn embed(u: &[C64], qubits: &[usize], n: usize) -> DMatrix<C64> {
    let d = 1 << n;
    let k = qubits.len();
    let local = |i: usize| qubits.iter().fold(0, |acc, &q| (acc << 1) | bit(i, q, n));
    let rest_mask: usize = (0..n)
        .filter(|q| !qubits.contains(q))
        .map(|q| 1 << (n - 1 - q))
        .sum();
    DMatrix::from_fn(d, d, |i, j| {
        if i & rest_mask != j & rest_mask {
            c(0.0)
        } else {
            u[local(i) * (1 << k) + local(j)]
        }
    })
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn kraus(rho: &DensityMatrix, ops: &[[C64; 4]], qubit: usize) -> DMatrix<C64> {
    let m = rho.to_matrix();
    let n = rho.qubits();
    ops.iter()
        .map(|k| {
            let full = embed(k, &[qubit], n);
            &full * &m * full.adjoint()
        })
        .fold(DMatrix::zeros(m.nrows(), m.ncols()), |acc, x| acc + x)
}

#[test]
fn partial_trace_matches_index_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 4;
    let rho = random_mixed(n, 3, &mut rng);
    for subset in [
        vec![2, 0],
        vec![1, 3],
        vec![3],
        vec![3, 1, 0, 2],
        vec![0, 1, 2],
    ] {
        let got = reduced_density_matrix(&rho, &subset).unwrap().to_matrix();
        let k = subset.len();
        let rest: Vec<usize> = (0..n).filter(|q| !subset.contains(q)).collect();
        let index = |kept: usize, traced: usize| {
            let mut i = 0;
            for (pos, &q) in subset.iter().enumerate() {
                i |= ((kept >> (k - 1 - pos)) & 1) << (n - 1 - q);
            }
            for (pos, &q) in rest.iter().enumerate() {
                i |= ((traced >> (rest.len() - 1 - pos)) & 1) << (n - 1 - q);
            }
            i
        };
        let want = DMatrix::from_fn(1 << k, 1 << k, |a, b| {
            (0..1 << rest.len())
                .map(|r| rho.get(index(a, r), index(b, r)))
                .sum()
        });
        assert!(max_diff(&got, &want) < TOL, "subset {subset:?}");
    }
}

#[test]
fn gates_match_dense_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 4;
    let rho = random_mixed(n, 4, &mut rng);
    let two: [C64; 16] = haar_unitary(4, &mut rng).try_into().unwrap();
    let gates = vec![
        GateOp::Hadamard(2),
        GateOp::Cnot {
            control: 2,
            target: 0,
        },
        GateOp::Cnot {
            control: 0,
            target: 3,
        },
        GateOp::Swap(1, 3),
        random_unitary_gate(1, &mut rng),
        GateOp::Two {
            qubits: [3, 1],
            u: two,
        },
    ];
    for g in gates {
        let u = embed(&g.matrix(), &g.qubits(), n);
        let want = &u * rho.to_matrix() * u.adjoint();
        let got = apply_gate(&rho, &g).unwrap().to_matrix();
        assert!(max_diff(&got, &want) < TOL, "{g:?}");
    }
}

#[test]
fn cnot_on_basis_states() {
    // CNOT(0 -> 1) maps |10> to |11>.
    let mut psi = vec![c(0.0); 4];
    psi[2] = c(1.0);
    let rho = DensityMatrix::from_pure(&psi).unwrap();
    let out = apply_gate(
        &rho,
        &GateOp::Cnot {
            control: 0,
            target: 1,
        },
    )
    .unwrap();
    assert!((out.get(3, 3) - c(1.0)).norm() < TOL);
}

#[test]
fn channels_match_kraus_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let rho = random_mixed(3, 5, &mut rng);
    let (z, o) = (c(0.0), c(1.0));
    let eta = 0.37;
    let s = |x: f64| c(x.sqrt());
    let identity = [o, z, z, o];
    let p0 = [o, z, z, z];
    let p1 = [z, z, z, o];
    let x = [z, o, o, z];
    let y = [z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z];
    let zz = [o, z, z, c(-1.0)];
    let scale = |a: [C64; 4], f: C64| a.map(|v| v * f);

    let collapse = [
        scale(identity, s(1.0 - eta)),
        scale(p0, s(eta)),
        scale(p1, s(eta)),
    ];
    let got = apply_noise_channel(&rho, &NoiseChannelSpec::collapse(eta), 1).unwrap();
    assert!(max_diff(&got.to_matrix(), &kraus(&rho, &collapse, 1)) < TOL);

    let depol = [
        scale(identity, s(1.0 - 0.75 * eta)),
        scale(x, s(eta / 4.0)),
        scale(y, s(eta / 4.0)),
        scale(zz, s(eta / 4.0)),
    ];
    let got = apply_noise_channel(&rho, &NoiseChannelSpec::depolarize(eta), 2).unwrap();
    assert!(max_diff(&got.to_matrix(), &kraus(&rho, &depol, 2)) < TOL);

    let gamma: f64 = 0.8;
    let lambda = (-gamma).exp();
    let dephase = [
        scale(identity, s((1.0 + lambda) / 2.0)),
        scale(zz, s((1.0 - lambda) / 2.0)),
    ];
    let got = apply_noise_channel(&rho, &NoiseChannelSpec::dephase(gamma), 0).unwrap();
    assert!(max_diff(&got.to_matrix(), &kraus(&rho, &dephase, 0)) < TOL);

    // Collapse in a rotated basis projects onto the basis columns.
    let b: [C64; 4] = haar_unitary(2, &mut rng).try_into().unwrap();
    let proj = |k: usize| {
        let (u0, u1) = (b[k], b[2 + k]);
        [
            u0 * u0.conj(),
            u0 * u1.conj(),
            u1 * u0.conj(),
            u1 * u1.conj(),
        ]
    };
    let rotated = [
        scale(identity, s(1.0 - eta)),
        scale(proj(0), s(eta)),
        scale(proj(1), s(eta)),
    ];
    let spec = NoiseChannelSpec {
        model: NoiseModel::Collapse { basis: Some(b) },
        strength: eta,
    };
    let got = apply_noise_channel(&rho, &spec, 1).unwrap();
    assert!(max_diff(&got.to_matrix(), &kraus(&rho, &rotated, 1)) < 1e-11);
}

#[test]
fn dephasing_equals_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..100 {
        let rho = random_mixed(2, rng.random_range(1..=4), &mut rng);
        let eta: f64 = rng.random();
        let a = apply_noise_channel(&rho, &NoiseChannelSpec::collapse(eta), 1).unwrap();
        let b =
            apply_noise_channel(&rho, &NoiseChannelSpec::dephase(-(1.0 - eta).ln()), 1).unwrap();
        assert!(max_diff(&a.to_matrix(), &b.to_matrix()) < TOL);
    }
}

#[test]
fn operations_on_disjoint_qubits_commute() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let rho = random_mixed(4, 3, &mut rng);
    let g1 = random_unitary_gate(0, &mut rng);
    let g2 = GateOp::Two {
        qubits: [2, 3],
        u: haar_unitary(4, &mut rng).try_into().unwrap(),
    };
    let ab = apply_gate(&apply_gate(&rho, &g1).unwrap(), &g2).unwrap();
    let ba = apply_gate(&apply_gate(&rho, &g2).unwrap(), &g1).unwrap();
    assert!(max_diff(&ab.to_matrix(), &ba.to_matrix()) < TOL);

    let n1 = NoiseChannelSpec::collapse(0.3);
    let n2 = NoiseChannelSpec::depolarize(0.6);
    let ab = apply_noise_channel(&apply_noise_channel(&rho, &n1, 1).unwrap(), &n2, 3).unwrap();
    let ba = apply_noise_channel(&apply_noise_channel(&rho, &n2, 3).unwrap(), &n1, 1).unwrap();
    assert!(max_diff(&ab.to_matrix(), &ba.to_matrix()) < TOL);
}

#[test]
fn noisy_random_circuit_stays_physical() {
    let spec = LatticeSpec::chain(6, 6).unwrap();
    let circuit = random_circuit(&spec, 6, 46);
    let states = evolve_trajectory(
        &spec,
        &circuit,
        &NoiseChannelSpec::collapse(0.3),
        DensityMatrix::zero_state(6).unwrap(),
        EvolveOptions::default(),
    )
    .unwrap();
    assert_eq!(states.len(), 7);
    for rho in &states {
        rho.validate().unwrap();
        assert!((rho.trace() - c(1.0)).norm() < 1e-10);
    }
}

#[test]
fn ghz_fidelities() {
    for (m, mid, q) in [(1, 0, 1), (2, 1, 1), (1, 3, 2), (2, 2, 2), (3, 3, 3)] {
        let circuit = ghz_circuit(m, mid, q).unwrap();
        let n = m + mid + q;
        let spec = LatticeSpec::chain(n, circuit.depth()).unwrap();
        let rho = evolve_circuit(
            &spec,
            &circuit,
            &NoiseChannelSpec::collapse(0.0),
            DensityMatrix::zero_state(n).unwrap(),
            EvolveOptions::default(),
            |_, _| Ok(ControlFlow::Continue(())),
        )
        .unwrap();
        let f = rho.fidelity_pure(&ghz_state(m, mid, q)).unwrap();
        assert!(f >= 1.0 - 1e-10, "({m},{mid},{q}): {f}");
    }
}

#[test]
fn long_runs_do_not_drift() {
    let spec = LatticeSpec::chain(4, 100).unwrap();
    let circuit = random_circuit(&spec, 100, 47);
    let rho = evolve_circuit(
        &spec,
        &circuit,
        &NoiseChannelSpec::depolarize(0.1),
        DensityMatrix::zero_state(4).unwrap(),
        EvolveOptions::default(),
        |_, _| Ok(ControlFlow::Continue(())),
    )
    .unwrap();
    assert!((rho.trace() - c(1.0)).norm() < 1e-10);
    assert!(rho.hermiticity_error() < 1e-10);
}

#[test]
fn binary_round_trip_and_rejection() {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let rho = random_mixed(3, 2, &mut rng);
    let mut bytes = Vec::new();
    write_density(&mut bytes, &rho).unwrap();
    assert_eq!(bytes.len(), 16 + 64 * 16);
    assert_eq!(&bytes[..8], &8u64.to_le_bytes());
    let back = read_density(&bytes[..]).unwrap();
    assert_eq!(back, rho);

    assert!(read_density(&bytes[..bytes.len() - 1]).is_err());
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(read_density(&trailing[..]).is_err());
    let mut bad = bytes.clone();
    bad[..8].copy_from_slice(&7u64.to_le_bytes());
    assert!(read_density(&bad[..]).is_err());
}

#[test]
fn over_capacity_is_rejected() {
    let spec = LatticeSpec::chain(13, 1).unwrap();
    let circuit = random_circuit(&spec, 1, 0);
    let result = evolve_circuit(
        &spec,
        &circuit,
        &NoiseChannelSpec::collapse(0.1),
        DensityMatrix::zero_state(1).unwrap(),
        EvolveOptions::default(),
        |_, _| Ok(ControlFlow::Continue(())),
    );
    assert!(result.is_err());
}

proptest! {
    #[test]
    fn haar_unitaries_are_unitary(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(unitarity_error(&haar_unitary(k, &mut rng), k) < 1e-12);
    }

    #[test]
    fn reductions_have_unit_trace(seed in any::<u64>(), q in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_mixed(3, 2, &mut rng);
        let r = reduced_density_matrix(&rho, &[q]).unwrap();
        prop_assert!((r.trace() - c(1.0)).norm() < 1e-12);
        prop_assert!(r.validate().is_ok());
    }
}

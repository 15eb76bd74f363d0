//! Scheduled circuits and their noisy evolution.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DensityMatrix, GateOp, NoiseChannelSpec, C64};
use crate::error::{Error, Result};
use crate::lattice::{pairs_at, LatticeSpec};

/// Default register limit of the exact engine.
pub const DEFAULT_MAX_QUBITS: usize = 12;

/// Gates per step; `steps[t - 1]` holds the gates of step `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    pub steps: Vec<Vec<GateOp>>,
}

impl Circuit {
    /// Number of steps that carry gates.
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    /// Check that every step touches each qubit at most once and, when
    /// `checked`, that two-qubit gates act only on scheduled pairs.
    pub fn check_schedule(&self, spec: &LatticeSpec, checked: bool) -> Result<()> {
        if self.depth() > spec.steps() {
            return Err(Error::Schedule(format!(
                "circuit has {} steps but the run has only {}",
                self.depth(),
                spec.steps()
            )));
        }
        let n = spec.particles();
        for (i, gates) in self.steps.iter().enumerate() {
            let t = i + 1;
            let mut busy = vec![false; n];
            let pairs = if checked {
                pairs_at(spec, t)
            } else {
                Vec::new()
            };
            for g in gates {
                g.validate(n)?;
                let qs = g.qubits();
                for &q in &qs {
                    if std::mem::replace(&mut busy[q], true) {
                        return Err(Error::Schedule(format!("qubit {q} used twice at step {t}")));
                    }
                }
                if checked && qs.len() == 2 {
                    let pair = (qs[0].min(qs[1]), qs[0].max(qs[1]));
                    if !pairs.contains(&pair) {
                        return Err(Error::Schedule(format!(
                            "qubits {pair:?} do not interact at step {t}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvolveOptions {
    pub max_qubits: usize,
    pub schedule_checked: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            max_qubits: DEFAULT_MAX_QUBITS,
            schedule_checked: true,
        }
    }
}

/// Evolve `rho0` through `spec.steps()` steps: the gates of each step, then
/// the noise channel on every qubit. Steps past the circuit's depth are
/// idle but still noisy. `observer` sees the state at `t = 0` and after each
/// step, and may stop the run early by returning `ControlFlow::Break`.
pub fn evolve_circuit(
    spec: &LatticeSpec,
    circuit: &Circuit,
    noise: &NoiseChannelSpec,
    rho0: DensityMatrix,
    options: EvolveOptions,
    mut observer: impl FnMut(usize, &DensityMatrix) -> Result<ControlFlow<()>>,
) -> Result<DensityMatrix> {
    let n = spec.particles();
    if n > options.max_qubits {
        return Err(Error::Capacity(format!(
            "{n} qubits exceeds the configured maximum of {}",
            options.max_qubits
        )));
    }
    if rho0.qubits() != n {
        return Err(Error::Shape(format!(
            "initial state has {} qubits, lattice has {n} particles",
            rho0.qubits()
        )));
    }
    noise.validate()?;
    circuit.check_schedule(spec, options.schedule_checked)?;

    let mut rho = rho0;
    if observer(0, &rho)?.is_break() {
        return Ok(rho);
    }
    for t in 1..=spec.steps() {
        if let Some(gates) = circuit.steps.get(t - 1) {
            let mut ordered: Vec<&GateOp> = gates.iter().collect();
            ordered.sort_by_key(|g| g.qubits().into_iter().min());
            for g in ordered {
                rho.apply(g)?;
            }
        }
        if !noise.is_identity() {
            for q in 0..n {
                rho.apply_noise(noise, q)?;
            }
        }
        if observer(t, &rho)?.is_break() {
            break;
        }
    }
    Ok(rho)
}

/// [`evolve_circuit`] keeping every intermediate state.
pub fn evolve_trajectory(
    spec: &LatticeSpec,
    circuit: &Circuit,
    noise: &NoiseChannelSpec,
    rho0: DensityMatrix,
    options: EvolveOptions,
) -> Result<Vec<DensityMatrix>> {
    let mut states = Vec::with_capacity(spec.steps() + 1);
    evolve_circuit(spec, circuit, noise, rho0, options, |_, rho| {
        states.push(rho.clone());
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(states)
}

/// Place gates on a chain as early as the alternating schedule allows,
/// keeping their order on shared qubits.
fn schedule_on_chain(n: usize, gates: Vec<GateOp>) -> Circuit {
    let mut ready = vec![1usize; n];
    let mut circuit = Circuit::default();
    for g in gates {
        let qs = g.qubits();
        let mut t = qs.iter().map(|&q| ready[q]).max().unwrap_or(1);
        if let [a, b] = qs[..] {
            let left = a.min(b);
            while (t - 1) % 2 != left % 2 {
                t += 1;
            }
        }
        for &q in &qs {
            ready[q] = t + 1;
        }
        if circuit.steps.len() < t {
            circuit.steps.resize(t, Vec::new());
        }
        circuit.steps[t - 1].push(g);
    }
    circuit
}

/// Circuit on a chain `A (m) | C (mid) | B (q)` that prepares
/// `(|0^m 0^mid 0^q> + |1^m 0^mid 1^q>) / sqrt(2)` from `|0...0>`: a Hadamard
/// on qubit 0, a CNOT chain over the first `m + q` qubits, then nearest-
/// neighbor swaps carrying the last `q` of them past the middle register,
/// rightmost first.
pub fn ghz_circuit(m: usize, mid: usize, q: usize) -> Result<Circuit> {
    if m == 0 || q == 0 {
        return Err(Error::InvalidParameter(
            "GHZ registers need m >= 1 and q >= 1".into(),
        ));
    }
    let total = m + mid + q;
    if total > DEFAULT_MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "GHZ circuit needs {total} qubits, the maximum is {DEFAULT_MAX_QUBITS}"
        )));
    }
    let mut gates = vec![GateOp::Hadamard(0)];
    gates.extend((0..m + q - 1).map(|i| GateOp::Cnot {
        control: i,
        target: i + 1,
    }));
    for k in 0..q {
        let start = m + q - 1 - k;
        gates.extend((start..start + mid).map(|i| GateOp::Swap(i, i + 1)));
    }
    Ok(schedule_on_chain(total, gates))
}

/// State vector `(|0^m 0^mid 0^q> + |1^m 0^mid 1^q>) / sqrt(2)`.
pub fn ghz_state(m: usize, mid: usize, q: usize) -> Vec<C64> {
    let total = m + mid + q;
    let mut psi = vec![C64::new(0.0, 0.0); 1 << total];
    let ones_a = ((1usize << m) - 1) << (mid + q);
    let ones_b = (1usize << q) - 1;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    psi[0] = C64::new(h, 0.0);
    psi[ones_a | ones_b] = C64::new(h, 0.0);
    psi
}

fn gaussian_complex(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random `k x k` unitary (row-major), from the QR decomposition of a
/// complex Gaussian matrix with the phases of `R`'s diagonal divided out.
pub fn haar_unitary(k: usize, rng: &mut impl Rng) -> Vec<C64> {
    let g = DMatrix::from_fn(k, k, |_, _| gaussian_complex(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            out.push(q[(i, j)] * phase);
        }
    }
    out
}

/// Haar-random pure state on `n` qubits.
pub fn random_pure_state(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    let mut psi: Vec<C64> = (0..1usize << n).map(|_| gaussian_complex(rng)).collect();
    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|a| *a /= norm);
    psi
}

/// A Haar-random two-qubit gate on every scheduled pair of steps `1..=depth`.
pub fn random_circuit(spec: &LatticeSpec, depth: usize, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (1..=depth)
        .map(|t| {
            pairs_at(spec, t)
                .into_iter()
                .map(|(a, b)| {
                    let u: [C64; 16] = haar_unitary(4, &mut rng).try_into().expect("4x4 unitary");
                    GateOp::Two { qubits: [a, b], u }
                })
                .collect()
        })
        .collect();
    Circuit { steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::unitarity_error;

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [2, 4, 8] {
            assert!(unitarity_error(&haar_unitary(k, &mut rng), k) < 1e-12);
        }
    }

    #[test]
    fn ghz_schedule_respects_alternation() {
        for (m, mid, q) in [(1, 0, 1), (2, 2, 2), (1, 6, 1), (3, 3, 2)] {
            let c = ghz_circuit(m, mid, q).unwrap();
            let spec = LatticeSpec::chain(m + mid + q, c.depth()).unwrap();
            c.check_schedule(&spec, true).unwrap();
        }
        assert!(ghz_circuit(0, 1, 1).is_err());
        assert!(matches!(ghz_circuit(6, 6, 6), Err(Error::Capacity(_))));
    }

    #[test]
    fn schedule_violations_are_rejected() {
        let spec = LatticeSpec::chain(4, 2).unwrap();
        let off = Circuit {
            steps: vec![vec![GateOp::Swap(1, 2)]],
        };
        assert!(matches!(
            off.check_schedule(&spec, true),
            Err(Error::Schedule(_))
        ));
        assert!(off.check_schedule(&spec, false).is_ok());
        let twice = Circuit {
            steps: vec![vec![GateOp::Hadamard(0), GateOp::Swap(0, 1)]],
        };
        assert!(matches!(
            twice.check_schedule(&spec, false),
            Err(Error::Schedule(_))
        ));
        let long = Circuit {
            steps: vec![Vec::new(); 3],
        };
        assert!(long.check_schedule(&spec, true).is_err());
    }

    #[test]
    fn zero_steps_return_initial_state() {
        let spec = LatticeSpec::chain(3, 0).unwrap();
        let rho0 = DensityMatrix::zero_state(3).unwrap();
        let out = evolve_circuit(
            &spec,
            &Circuit::default(),
            &NoiseChannelSpec::collapse(0.5),
            rho0.clone(),
            EvolveOptions::default(),
            |_, _| Ok(ControlFlow::Continue(())),
        )
        .unwrap();
        assert_eq!(out, rho0);
    }

    #[test]
    fn capacity_limit() {
        let spec = LatticeSpec::chain(4, 1).unwrap();
        let opts = EvolveOptions {
            max_qubits: 3,
            schedule_checked: true,
        };
        let rho0 = DensityMatrix::zero_state(4).unwrap();
        let res = evolve_circuit(
            &spec,
            &Circuit::default(),
            &NoiseChannelSpec::collapse(0.0),
            rho0,
            opts,
            |_, _| Ok(ControlFlow::Continue(())),
        );
        assert!(matches!(res, Err(Error::Capacity(_))));
    }

    #[test]
    fn random_circuit_is_seeded() {
        let spec = LatticeSpec::chain(5, 4).unwrap();
        assert_eq!(random_circuit(&spec, 4, 9), random_circuit(&spec, 4, 9));
        assert_ne!(random_circuit(&spec, 4, 9), random_circuit(&spec, 4, 10));
        random_circuit(&spec, 4, 9)
            .check_schedule(&spec, true)
            .unwrap();
    }
}

//! Exact density-matrix simulation of small qubit registers.
//!
//! Qubit 0 is the most significant bit of a basis index, so `|q0 q1 ... >`
//! reads left to right.

mod channels;
mod circuits;
mod io;

pub use channels::{apply_noise_channel, NoiseChannelSpec, NoiseKind, NoiseModel};
pub use circuits::{
    evolve_circuit, evolve_trajectory, ghz_circuit, ghz_state, haar_unitary, random_circuit,
    random_pure_state, Circuit, EvolveOptions, DEFAULT_MAX_QUBITS,
};
pub use io::{
    read_density, read_density_file, write_density, write_density_csv, write_density_file,
};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;

/// Largest register any density matrix may hold (4^14 complex entries).
pub const HARD_MAX_QUBITS: usize = 14;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dense `2^n x 2^n` density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    data: Vec<C64>,
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "a register needs at least one qubit".into(),
        ));
    }
    if n > HARD_MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "{n} qubits exceeds the limit of {HARD_MAX_QUBITS}"
        )));
    }
    Ok(())
}

impl DensityMatrix {
    /// `|0...0><0...0|` on `n` qubits.
    pub fn zero_state(n: usize) -> Result<Self> {
        check_qubits(n)?;
        let dim = 1usize << n;
        let mut data = vec![ZERO; dim * dim];
        data[0] = ONE;
        Ok(DensityMatrix { n, data })
    }

    /// `|psi><psi|` for a normalized state vector of length `2^n`.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let n = qubits_of_len(psi.len())?;
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::Validation(format!(
                "state norm^2 is {norm}, expected 1"
            )));
        }
        let data = psi
            .iter()
            .flat_map(|a| psi.iter().map(move |b| a * b.conj()))
            .collect();
        Ok(DensityMatrix { n, data })
    }

    /// Wrap row-major entries, checking the density-matrix invariants.
    pub fn from_entries(n: usize, data: Vec<C64>) -> Result<Self> {
        check_qubits(n)?;
        let dim = 1usize << n;
        if data.len() != dim * dim {
            return Err(Error::Shape(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        let rho = DensityMatrix { n, data };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_entries_unchecked(n: usize, data: Vec<C64>) -> Self {
        DensityMatrix { n, data }
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = qubits_of_len(m.nrows())?;
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self::from_entries(n, data)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.data)
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order (the Hermitian part is diagonalized).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = hermitian_part(&self.to_matrix())
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Check Hermiticity, unit trace and positivity within the tolerances.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::Validation(format!(
                "not Hermitian (error {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::Validation(format!("trace is {tr}, expected 1")));
        }
        let min = self.eigenvalues()[0];
        if min < -EIGEN_TOL {
            return Err(Error::Validation(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// `<psi| rho |psi>`.
    pub fn fidelity_pure(&self, psi: &[C64]) -> Result<f64> {
        if psi.len() != self.dim() {
            return Err(Error::Shape(format!(
                "state of length {} for dim {}",
                psi.len(),
                self.dim()
            )));
        }
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let r: C64 = row.iter().zip(psi).map(|(a, b)| a * b).sum();
            acc += psi[i].conj() * r;
        }
        Ok(acc.re)
    }

    /// Apply `U rho U^dagger` in place.
    pub fn apply(&mut self, g: &GateOp) -> Result<()> {
        g.validate(self.n)?;
        let qubits = g.qubits();
        let u = g.matrix();
        self.right_multiply_dagger(&qubits, &u);
        self.conjugate_transpose();
        self.right_multiply_dagger(&qubits, &u);
        Ok(())
    }

    /// `rho <- rho U^dagger` with `U` acting on `qubits`.
    fn right_multiply_dagger(&mut self, qubits: &[usize], u: &[C64]) {
        let d = self.dim();
        let n = self.n;
        let masks: Vec<usize> = qubits.iter().map(|&q| 1 << (n - 1 - q)).collect();
        let k = 1usize << qubits.len();
        let all: usize = masks.iter().sum();
        let offsets: Vec<usize> = (0..k)
            .map(|c| {
                masks
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| c >> (masks.len() - 1 - b) & 1 == 1)
                    .map(|(_, m)| m)
                    .sum()
            })
            .collect();
        let row_op = |row: &mut [C64]| {
            let mut v = [ZERO; 4];
            for base in (0..d).filter(|i| i & all == 0) {
                for c in 0..k {
                    v[c] = row[base + offsets[c]];
                }
                for c in 0..k {
                    let mut s = ZERO;
                    for cp in 0..k {
                        s += v[cp] * u[c * k + cp].conj();
                    }
                    row[base + offsets[c]] = s;
                }
            }
        };
        if d >= 64 {
            self.data.par_chunks_mut(d).for_each(row_op);
        } else {
            self.data.chunks_mut(d).for_each(row_op);
        }
    }

    fn conjugate_transpose(&mut self) {
        let d = self.dim();
        for i in 0..d {
            self.data[i * d + i] = self.data[i * d + i].conj();
            for j in i + 1..d {
                let a = self.data[i * d + j];
                self.data[i * d + j] = self.data[j * d + i].conj();
                self.data[j * d + i] = a.conj();
            }
        }
    }

    /// Visit every entry together with its row and column index.
    pub(crate) fn map_entries(&mut self, f: impl Fn(usize, usize, C64) -> C64 + Sync) {
        let d = self.dim();
        self.data
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(i, j, *v);
                }
            });
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
}

fn qubits_of_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Shape(format!(
            "dimension {len} is not a power of two >= 2"
        )));
    }
    let n = len.trailing_zeros() as usize;
    check_qubits(n)?;
    Ok(n)
}

pub(crate) fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Trace distance `1/2 ||a - b||_1`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.qubits() != b.qubits() {
        return Err(Error::Validation(format!(
            "trace distance between {} and {} qubits",
            a.qubits(),
            b.qubits()
        )));
    }
    let diff = hermitian_part(&(a.to_matrix() - b.to_matrix()));
    Ok(0.5
        * diff
            .symmetric_eigenvalues()
            .iter()
            .map(|l| l.abs())
            .sum::<f64>())
}

/// A gate on one or two qubits.
#[derive(Debug, Clone, PartialEq)]
pub enum GateOp {
    Hadamard(usize),
    Cnot {
        control: usize,
        target: usize,
    },
    Swap(usize, usize),
    /// Row-major 2x2 unitary.
    Single {
        qubit: usize,
        u: [C64; 4],
    },
    /// Row-major 4x4 unitary; `qubits[0]` is the more significant index bit.
    Two {
        qubits: [usize; 2],
        u: [C64; 16],
    },
}

impl GateOp {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            GateOp::Hadamard(q) | GateOp::Single { qubit: q, .. } => vec![q],
            GateOp::Cnot { control, target } => vec![control, target],
            GateOp::Swap(a, b) => vec![a, b],
            GateOp::Two { qubits, .. } => qubits.to_vec(),
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        self.qubits().len() == 2
    }

    /// Row-major unitary over the gate's qubits in [`GateOp::qubits`] order.
    pub fn matrix(&self) -> Vec<C64> {
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            GateOp::Hadamard(_) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                vec![r(h), r(h), r(h), r(-h)]
            }
            GateOp::Cnot { .. } => permutation(&[0, 1, 3, 2]),
            GateOp::Swap(..) => permutation(&[0, 2, 1, 3]),
            GateOp::Single { u, .. } => u.to_vec(),
            GateOp::Two { u, .. } => u.to_vec(),
        }
    }

    /// Check qubit indices against a register of `n` qubits and unitarity.
    pub fn validate(&self, n: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= n) {
            return Err(Error::Validation(format!(
                "gate qubit {q} outside {n}-qubit register"
            )));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::Validation(format!(
                "gate targets repeat qubit {}",
                qs[0]
            )));
        }
        let err = unitarity_error(&self.matrix(), 1 << qs.len());
        if err > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "gate is not unitary (error {err:.3e})"
            )));
        }
        Ok(())
    }
}

fn permutation(image: &[usize]) -> Vec<C64> {
    let k = image.len();
    let mut u = vec![ZERO; k * k];
    for (col, &row) in image.iter().enumerate() {
        u[row * k + col] = ONE;
    }
    u
}

/// Largest entry of `|U^dagger U - I|`.
pub fn unitarity_error(u: &[C64], k: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let s: C64 = (0..k).map(|r| u[r * k + i].conj() * u[r * k + j]).sum();
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((s - target).norm());
        }
    }
    worst
}

/// `U rho U^dagger` on a copy of `rho`.
pub fn apply_gate(rho: &DensityMatrix, g: &GateOp) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    out.apply(g)?;
    Ok(out)
}

/// Partial trace keeping `subset`, whose order becomes the qubit order of
/// the result.
pub fn reduced_density_matrix(rho: &DensityMatrix, subset: &[usize]) -> Result<DensityMatrix> {
    let n = rho.qubits();
    if subset.is_empty() {
        return Err(Error::Validation("subset must not be empty".into()));
    }
    let mut seen = vec![false; n];
    for &q in subset {
        if q >= n || std::mem::replace(&mut seen[q], true) {
            return Err(Error::Validation(format!(
                "subset {subset:?} is not a set of distinct qubits below {n}"
            )));
        }
    }
    let env: Vec<usize> = (0..n).filter(|&q| !seen[q]).collect();
    let spread = |qs: &[usize], local: usize| -> usize {
        qs.iter()
            .enumerate()
            .filter(|&(b, _)| local >> (qs.len() - 1 - b) & 1 == 1)
            .map(|(_, &q)| 1usize << (n - 1 - q))
            .sum()
    };
    let kept: Vec<usize> = (0..1usize << subset.len())
        .map(|i| spread(subset, i))
        .collect();
    let rest: Vec<usize> = (0..1usize << env.len()).map(|e| spread(&env, e)).collect();
    let k = kept.len();
    let mut data = vec![ZERO; k * k];
    for i in 0..k {
        for j in 0..k {
            data[i * k + j] = rest
                .iter()
                .map(|&e| rho.get(kept[i] | e, kept[j] | e))
                .sum();
        }
    }
    Ok(DensityMatrix::from_entries_unchecked(subset.len(), data))
}

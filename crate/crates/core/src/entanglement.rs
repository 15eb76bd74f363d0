//! Entanglement measures in bits: entropy of entanglement, entanglement of
//! formation (closed form for two qubits, ensemble minimization otherwise),
//! the continuity bound, and the distance bound on formation entanglement.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    haar_unitary, hermitian_part, reduced_density_matrix, trace_distance, DensityMatrix, C64,
};

/// Eigenvalues below this are treated as zero in entropies.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Largest `d * d'` handled by [`eof_minimize`].
pub const MAX_MINIMIZE_DIM: usize = 64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Two disjoint qubit sets of one register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl Bipartition {
    pub fn new(a: Vec<usize>, b: Vec<usize>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Validation(
                "both sides of a bipartition need a qubit".into(),
            ));
        }
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "sides {a:?} and {b:?} overlap or repeat"
            )));
        }
        Ok(Bipartition { a, b })
    }

    /// Check the sides against an `n`-qubit register.
    pub fn check(&self, n: usize) -> Result<()> {
        if let Some(&q) = self.a.iter().chain(&self.b).find(|&&q| q >= n) {
            return Err(Error::Validation(format!(
                "qubit {q} outside {n}-qubit register"
            )));
        }
        Ok(())
    }

    pub fn dim_a(&self) -> usize {
        1 << self.a.len()
    }

    pub fn dim_b(&self) -> usize {
        1 << self.b.len()
    }

    /// Qubits of A followed by those of B.
    pub fn joint(&self) -> Vec<usize> {
        self.a.iter().chain(&self.b).copied().collect()
    }
}

impl std::str::FromStr for Bipartition {
    type Err = Error;

    /// Parse `0,1|2,3`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('|')
            .ok_or_else(|| Error::InvalidParameter(format!("partition '{s}' lacks '|'")))?;
        let side = |part: &str| {
            part.split(',')
                .map(|q| {
                    q.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidParameter(format!("bad qubit '{q}' in partition"))
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        Bipartition::new(side(a)?, side(b)?)
    }
}

impl std::fmt::Display for Bipartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: &[usize]| {
            v.iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "{}|{}", join(&self.a), join(&self.b))
    }
}

fn entropy_of_spectrum(eigenvalues: impl IntoIterator<Item = f64>) -> f64 {
    let s: f64 = eigenvalues
        .into_iter()
        .filter(|&l| l > EIGEN_FLOOR)
        .map(|l| -l * l.log2())
        .sum();
    s.max(0.0)
}

fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect()
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of_spectrum(rho.eigenvalues())
}

/// Reduced matrix of the leading `dim_a` index block of a pure state laid out
/// as `dim_a x dim_rest`.
fn reduced_of_vector(psi: &[C64], dim_a: usize) -> DMatrix<C64> {
    let rest = psi.len() / dim_a;
    let m = DMatrix::from_row_slice(dim_a, rest, psi);
    &m * m.adjoint()
}

/// Reorder a state vector so that `order` become the leading qubits.
fn permute_state(psi: &[C64], n: usize, order: &[usize]) -> Vec<C64> {
    let mut out = vec![ZERO; psi.len()];
    for (idx, &amp) in psi.iter().enumerate() {
        let mut new = 0usize;
        for &q in order {
            new = (new << 1) | (idx >> (n - 1 - q) & 1);
        }
        out[new] = amp;
    }
    out
}

/// Entropy of entanglement of a pure state across a bipartition covering
/// every qubit.
pub fn entropy_of_entanglement(psi: &[C64], bip: &Bipartition) -> Result<f64> {
    if psi.len() < 2 || !psi.len().is_power_of_two() {
        return Err(Error::Shape(format!(
            "state length {} is not a power of two",
            psi.len()
        )));
    }
    let n = psi.len().trailing_zeros() as usize;
    bip.check(n)?;
    if bip.a.len() + bip.b.len() != n {
        return Err(Error::Validation(format!(
            "bipartition {bip} does not cover all {n} qubits of a pure state"
        )));
    }
    let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Validation(format!(
            "state norm^2 is {norm}, expected 1"
        )));
    }
    let ordered = permute_state(psi, n, &bip.joint());
    Ok(entropy_of_spectrum(hermitian_eigenvalues(
        &reduced_of_vector(&ordered, bip.dim_a()),
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EofMethod {
    ClosedForm,
    Minimization,
}

/// Entanglement of formation and, for minimization, the ensemble found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EofResult {
    pub value: f64,
    pub method: EofMethod,
    pub ensemble_size: usize,
    pub restarts: usize,
    pub converged: bool,
    pub weights: Vec<f64>,
    /// Normalized pure states over A then B, as `(re, im)` pairs.
    pub states: Vec<Vec<(f64, f64)>>,
    /// Trace distance between the ensemble average and the input state.
    pub reconstruction_error: f64,
}

fn binary_entropy(x: f64) -> f64 {
    entropy_of_spectrum([x, 1.0 - x])
}

/// Concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.qubits() != 2 {
        return Err(Error::Validation(format!(
            "concurrence needs 2 qubits, got {}",
            rho.qubits()
        )));
    }
    let m = hermitian_part(&rho.to_matrix());
    let eig = m.clone().symmetric_eigen();
    let sqrt_rho = &eig.eigenvectors
        * DMatrix::from_diagonal(&DVector::from_iterator(
            4,
            eig.eigenvalues
                .iter()
                .map(|&l| C64::new(l.max(0.0).sqrt(), 0.0)),
        ))
        * eig.eigenvectors.adjoint();
    // sigma_y (x) sigma_y is real with entries -1 on the anti-diagonal corners.
    let mut yy = DMatrix::<C64>::zeros(4, 4);
    yy[(0, 3)] = -ONE;
    yy[(3, 0)] = -ONE;
    yy[(1, 2)] = ONE;
    yy[(2, 1)] = ONE;
    // The square roots of the spin-flipped spectrum are the singular values
    // of sqrt(rho) (Y x Y) conj(sqrt(rho)); the SVD avoids square roots of
    // rounding noise.
    let x = &sqrt_rho * &yy * sqrt_rho.conjugate();
    let mut lambdas: Vec<f64> = x.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Closed-form two-qubit entanglement of formation via the concurrence.
pub fn eof_two_qubit(rho: &DensityMatrix) -> Result<EofResult> {
    rho.validate()?;
    let c = concurrence(rho)?;
    let value = binary_entropy((1.0 + (1.0 - c * c).max(0.0).sqrt()) / 2.0);
    Ok(EofResult {
        value,
        method: EofMethod::ClosedForm,
        ensemble_size: 0,
        restarts: 0,
        converged: true,
        weights: Vec::new(),
        states: Vec::new(),
        reconstruction_error: 0.0,
    })
}

/// Smallest eigenvalue of the partial transpose on the second qubit of a
/// two-qubit state (negative iff entangled).
pub fn partial_transpose_min_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    if rho.qubits() != 2 {
        return Err(Error::Validation(
            "partial transpose check needs 2 qubits".into(),
        ));
    }
    let pt = DMatrix::from_fn(4, 4, |i, j| {
        let (a, b) = (i >> 1, i & 1);
        let (c, d) = (j >> 1, j & 1);
        rho.get(a << 1 | d, c << 1 | b)
    });
    Ok(hermitian_eigenvalues(&pt)
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Ensemble size; `None` uses the joint dimension `d * d'`.
    pub ensemble_size: Option<usize>,
    pub restarts: usize,
    /// Stop once one iteration lowers the value by less than this.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            ensemble_size: None,
            restarts: 32,
            tol: 1e-7,
            max_iterations: 2000,
            seed: 0,
        }
    }
}

/// Ensemble `psi_i` (unnormalized rows) with cached objective pieces.
struct Ensemble {
    rows: DMatrix<C64>,
    dim_a: usize,
}

struct Evaluation {
    value: f64,
    /// `ln sigma_i` per member, on the A factor.
    logs: Vec<DMatrix<C64>>,
}

impl Ensemble {
    fn member(&self, i: usize) -> Vec<C64> {
        self.rows.row(i).iter().copied().collect()
    }

    /// Average entanglement (bits) and, when asked, the log reduced states.
    fn evaluate(&self, with_logs: bool) -> Evaluation {
        let mut value = 0.0;
        let mut logs = Vec::new();
        for i in 0..self.rows.nrows() {
            let psi = self.member(i);
            let w: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
            if w <= 1e-300 {
                if with_logs {
                    logs.push(DMatrix::zeros(self.dim_a, self.dim_a));
                }
                continue;
            }
            let sigma = hermitian_part(&reduced_of_vector(&psi, self.dim_a)) / C64::new(w, 0.0);
            let eig = sigma.symmetric_eigen();
            value += w * entropy_of_spectrum(eig.eigenvalues.iter().copied());
            if with_logs {
                let log_diag = DVector::from_iterator(
                    self.dim_a,
                    eig.eigenvalues
                        .iter()
                        .map(|&l| C64::new(l.max(1e-15).ln(), 0.0)),
                );
                logs.push(
                    &eig.eigenvectors
                        * DMatrix::from_diagonal(&log_diag)
                        * eig.eigenvectors.adjoint(),
                );
            }
        }
        Evaluation { value, logs }
    }

    /// Riemannian gradient (anti-Hermitian, `k x k`) of the value in nats
    /// under left multiplication by `exp(X)`.
    fn gradient(&self, logs: &[DMatrix<C64>]) -> DMatrix<C64> {
        let k = self.rows.nrows();
        let dim_b = self.rows.ncols() / self.dim_a;
        // Row i of `applied` is (ln sigma_i (x) I) psi_i.
        let mut applied = DMatrix::<C64>::zeros(k, self.rows.ncols());
        for i in 0..k {
            let psi = DMatrix::from_row_slice(self.dim_a, dim_b, &self.member(i));
            let out = &logs[i] * psi;
            for a in 0..self.dim_a {
                for b in 0..dim_b {
                    applied[(i, a * dim_b + b)] = out[(a, b)];
                }
            }
        }
        // m[(i, l)] = <applied_i | psi_l>
        let m = applied.conjugate() * self.rows.transpose();
        let g = m.conjugate() * C64::new(-2.0, 0.0);
        (&g - g.adjoint()) * C64::new(0.5, 0.0)
    }
}

/// Cayley transform `(I - X/2)^{-1} (I + X/2)` of an anti-Hermitian `X`.
fn cayley(x: &DMatrix<C64>) -> DMatrix<C64> {
    let k = x.nrows();
    let id = DMatrix::<C64>::identity(k, k);
    let half = x * C64::new(0.5, 0.0);
    (&id - &half)
        .lu()
        .solve(&(&id + &half))
        .expect("I - X/2 is invertible for anti-Hermitian X")
}

struct Descent {
    value: f64,
    rows: DMatrix<C64>,
    converged: bool,
}

fn descend(start: DMatrix<C64>, dim_a: usize, opts: &MinimizeOptions) -> Descent {
    let mut ens = Ensemble { rows: start, dim_a };
    let mut eval = ens.evaluate(true);
    let mut step = 1.0;
    for _ in 0..opts.max_iterations {
        let grad = ens.gradient(&eval.logs);
        let gnorm2: f64 = grad.iter().map(|z| z.norm_sqr()).sum();
        if gnorm2 < 1e-24 {
            return Descent {
                value: eval.value,
                rows: ens.rows,
                converged: true,
            };
        }
        let value_nats = eval.value * std::f64::consts::LN_2;
        let mut accepted = None;
        let mut s = step;
        for _ in 0..60 {
            let u = cayley(&(&grad * C64::new(-s, 0.0)));
            let trial = Ensemble {
                rows: &u * &ens.rows,
                dim_a,
            };
            let v = trial.evaluate(false).value;
            if v * std::f64::consts::LN_2 <= value_nats - 1e-4 * s * gnorm2 {
                accepted = Some((trial, v));
                break;
            }
            s *= 0.5;
        }
        let Some((trial, v)) = accepted else {
            return Descent {
                value: eval.value,
                rows: ens.rows,
                converged: true,
            };
        };
        let decrease = eval.value - v;
        ens = trial;
        eval = ens.evaluate(true);
        step = (s * 2.0).min(1e3);
        if decrease < opts.tol {
            return Descent {
                value: eval.value,
                rows: ens.rows,
                converged: true,
            };
        }
    }
    Descent {
        value: eval.value,
        rows: ens.rows,
        converged: false,
    }
}

/// Upper bound on the entanglement of formation of the state of `bip`'s
/// qubits within `rho`, by minimizing the average entanglement over
/// size-`k` decompositions.
///
/// Decompositions are parametrized by unitary mixing of the scaled
/// eigenvectors `sqrt(lambda_j) e_j`; each restart runs Riemannian gradient
/// descent with a Cayley retraction. Restart 0 starts from the
/// eigendecomposition, the others from seeded Haar-random unitaries.
pub fn eof_minimize(
    rho: &DensityMatrix,
    bip: &Bipartition,
    opts: &MinimizeOptions,
) -> Result<EofResult> {
    rho.validate()?;
    bip.check(rho.qubits())?;
    let dim = bip.dim_a() * bip.dim_b();
    if dim > MAX_MINIMIZE_DIM {
        return Err(Error::Method(format!(
            "minimization is limited to d*d' <= {MAX_MINIMIZE_DIM}, got {dim}"
        )));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    let joint = reduced_density_matrix(rho, &bip.joint())?;
    let eig = hermitian_part(&joint.to_matrix()).symmetric_eigen();
    let support: Vec<usize> = (0..dim)
        .filter(|&j| eig.eigenvalues[j] > EIGEN_FLOOR)
        .collect();
    let rank = support.len();
    let k = opts.ensemble_size.unwrap_or(dim);
    if k < rank {
        return Err(Error::InvalidParameter(format!(
            "ensemble size {k} is below the rank {rank} of the state"
        )));
    }
    let mut base = DMatrix::<C64>::zeros(k, dim);
    for (row, &j) in support.iter().enumerate() {
        let scale = eig.eigenvalues[j].sqrt();
        for x in 0..dim {
            base[(row, x)] = eig.eigenvectors[(x, j)] * scale;
        }
    }
    let dim_a = bip.dim_a();
    let runs: Vec<Descent> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                base.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                DMatrix::from_row_slice(k, k, &haar_unitary(k, &mut rng)) * &base
            };
            descend(start, dim_a, opts)
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, d)| d)
        .expect("at least one restart");

    let mut weights = Vec::new();
    let mut states = Vec::new();
    let mut average = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..k {
        let psi: Vec<C64> = best.rows.row(i).iter().copied().collect();
        let w: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if w <= 1e-300 {
            continue;
        }
        let v = DVector::from_vec(psi.clone());
        average += &v * v.adjoint();
        weights.push(w);
        states.push(
            psi.iter()
                .map(|a| (a.re / w.sqrt(), a.im / w.sqrt()))
                .collect(),
        );
    }
    let rebuilt = DensityMatrix::from_entries_unchecked(
        joint.qubits(),
        (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| average[(i, j)])
            .collect(),
    );
    Ok(EofResult {
        value: best.value.max(0.0),
        method: EofMethod::Minimization,
        ensemble_size: k,
        restarts: opts.restarts,
        converged: best.converged,
        weights,
        states,
        reconstruction_error: trace_distance(&rebuilt, &joint)?,
    })
}

/// Continuity bound `9 D log2 max(d, d') - D log2 D` with `D` the trace
/// distance `||rho - sigma||_1 / 2`; infinite when `D > 1`.
pub fn continuity_bound_value(distance: f64, dim_a: usize, dim_b: usize) -> f64 {
    if distance > 1.0 {
        return f64::INFINITY;
    }
    if distance <= 0.0 {
        return 0.0;
    }
    9.0 * distance * (dim_a.max(dim_b) as f64).log2() - distance * distance.log2()
}

/// Bound on `|E_f(rho) - E_f(sigma)|` for two states of one register.
pub fn continuity_bound(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    bip: &Bipartition,
) -> Result<f64> {
    if rho.qubits() != sigma.qubits() {
        return Err(Error::Validation(format!(
            "states have {} and {} qubits",
            rho.qubits(),
            sigma.qubits()
        )));
    }
    bip.check(rho.qubits())?;
    let joint = bip.joint();
    let d = trace_distance(
        &reduced_density_matrix(rho, &joint)?,
        &reduced_density_matrix(sigma, &joint)?,
    )?;
    Ok(continuity_bound_value(d, bip.dim_a(), bip.dim_b()))
}

/// `min(|A|,|B|) |A| |B| exp(-distance / xi)`, plus
/// `min(|A|,|B|) n min(|A|,|B|) exp(-t / xi)` when `(t, n)` is given.
pub fn theorem1_bound(
    size_a: usize,
    size_b: usize,
    distance: f64,
    xi: f64,
    correction: Option<(f64, usize)>,
) -> Result<f64> {
    if size_a == 0 || size_b == 0 {
        return Err(Error::InvalidParameter("set sizes must be >= 1".into()));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!("xi must be > 0, got {xi}")));
    }
    if !(distance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distance must be >= 0, got {distance}"
        )));
    }
    let decay = |x: f64| if x == 0.0 { 1.0 } else { (-x / xi).exp() };
    let m = size_a.min(size_b) as f64;
    let mut bound = m * (size_a * size_b) as f64 * decay(distance);
    if let Some((t, n)) = correction {
        bound += m * n as f64 * m * decay(t);
    }
    Ok(bound)
}

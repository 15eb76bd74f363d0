//! End-to-end studies: time-averaged entanglement between qubit sets, the
//! entanglement length fitted from it, the percolation correlation length of
//! the matching lattice, and the distance bound checked step by step.

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster_dynamics::InitMode;
use crate::entanglement::{
    eof_minimize, eof_two_qubit, theorem1_bound, Bipartition, MinimizeOptions,
};
use crate::error::{Error, Result};
use crate::lattice::{percolation_lattice, LatticeSpec};
use crate::percolation::{
    check_probability, derive_seed, fit_correlation_length, fit_decay, pool_by_distance,
    tau_estimate, top_layer_pairs, DecayFit, DecayPoint, PairSelection, TauEstimate,
};
use crate::quantum::{
    evolve_circuit, ghz_circuit, random_circuit, random_pure_state, reduced_density_matrix,
    Circuit, DensityMatrix, EvolveOptions, NoiseChannelSpec, NoiseKind, DEFAULT_MAX_QUBITS,
};

/// Averaged entanglement below this is treated as zero when fitting.
pub const EF_FLOOR: f64 = 1e-9;
/// Numerical slack when comparing a measured value with a bound.
pub const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sides: Vec<usize>,
    pub steps: usize,
    pub eta: f64,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
}

fn default_noise() -> NoiseKind {
    NoiseKind::Collapse
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitKind {
    Random,
    Ghz,
}

impl std::str::FromStr for CircuitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(CircuitKind::Random),
            "ghz" => Ok(CircuitKind::Ghz),
            other => Err(Error::InvalidParameter(format!(
                "unknown circuit '{other}' (random, ghz)"
            ))),
        }
    }
}

impl std::fmt::Display for CircuitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CircuitKind::Random => "random",
            CircuitKind::Ghz => "ghz",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub kind: CircuitKind,
    #[serde(default)]
    pub seed: u64,
    /// GHZ register sizes.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub mid: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// `singletons` starts from `|0...0>`, `giant` from a Haar-random pure
    /// state of the whole register.
    pub mode: InitMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            mode: InitMode::Singletons,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolationConfig {
    pub samples: u64,
    pub seed: u64,
}

impl Default for PercolationConfig {
    fn default() -> Self {
        PercolationConfig {
            samples: 200_000,
            seed: 1,
        }
    }
}

/// How the time average is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
#[derive(Default)]
pub enum Averaging {
    /// Mean over `t = 0..=T`.
    #[default]
    Horizon,
    /// Limit of the running mean as `T` grows: the circuit is followed by
    /// idle noisy steps until the entanglement stops changing by more than
    /// `tol` per step; an eventually constant sequence has that constant as
    /// its running-mean limit. Only for circuits that end (GHZ).
    Limit { tol: f64, max_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub init: InitConfig,
    /// Particle pairs (`all`, `from:x`, `a-b,c-d`); GHZ runs default to the
    /// two end registers.
    #[serde(default)]
    pub pairs: Option<String>,
    #[serde(default)]
    pub percolation: PercolationConfig,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default = "default_max_qubits")]
    pub max_qubits: usize,
}

fn default_max_qubits() -> usize {
    DEFAULT_MAX_QUBITS
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.model.sides.clone(), self.model.steps)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("eta", self.model.eta)?;
        let spec = self.spec()?;
        if spec.particles() > self.max_qubits {
            return Err(Error::Capacity(format!(
                "{} qubits exceeds the maximum of {}",
                spec.particles(),
                self.max_qubits
            )));
        }
        if self.circuit.kind == CircuitKind::Ghz {
            if spec.dim() != 1 {
                return Err(Error::Config("the GHZ circuit runs on a chain".into()));
            }
            let (m, mid, q) = self.ghz_registers()?;
            if m + mid + q != spec.particles() {
                return Err(Error::Config(format!(
                    "GHZ registers {m}+{mid}+{q} do not match {} particles",
                    spec.particles()
                )));
            }
        } else if let Averaging::Limit { .. } = self.averaging {
            return Err(Error::Config(
                "limit averaging needs a circuit that ends (ghz)".into(),
            ));
        }
        for target in self.targets()? {
            Bipartition::new(target.a.clone(), target.b.clone())?.check(spec.particles())?;
        }
        Ok(())
    }

    fn ghz_registers(&self) -> Result<(usize, usize, usize)> {
        match (self.circuit.m, self.circuit.mid, self.circuit.q) {
            (Some(m), Some(mid), Some(q)) => Ok((m, mid, q)),
            _ => Err(Error::Config("GHZ circuits need m, mid and q".into())),
        }
    }

    pub fn circuit(&self) -> Result<Circuit> {
        let spec = self.spec()?;
        match self.circuit.kind {
            CircuitKind::Random => Ok(random_circuit(&spec, spec.steps(), self.circuit.seed)),
            CircuitKind::Ghz => {
                let (m, mid, q) = self.ghz_registers()?;
                ghz_circuit(m, mid, q)
            }
        }
    }

    /// Qubit sets whose entanglement is tracked.
    pub fn targets(&self) -> Result<Vec<Target>> {
        let spec = self.spec()?;
        let n = spec.particles();
        if self.pairs.is_none() && self.circuit.kind == CircuitKind::Ghz {
            let (m, mid, _) = self.ghz_registers()?;
            return Ok(vec![Target {
                a: (0..m).collect(),
                b: (m + mid..n).collect(),
                distance: mid + 1,
            }]);
        }
        let selection: PairSelection = self.pairs.as_deref().unwrap_or("all").parse()?;
        let pairs: Vec<(usize, usize)> = match selection {
            PairSelection::All => (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .collect(),
            PairSelection::From(x) => (0..n).filter(|&y| y != x).map(|y| (x, y)).collect(),
            PairSelection::Particles(list) => list,
        };
        pairs
            .into_iter()
            .map(|(a, b)| {
                if a >= n || b >= n || a == b {
                    return Err(Error::Config(format!(
                        "pair {a}-{b} invalid for {n} particles"
                    )));
                }
                Ok(Target {
                    a: vec![a],
                    b: vec![b],
                    distance: spec.particle_distance(a, b),
                })
            })
            .collect()
    }

    /// Initial register state for `n` qubits.
    pub fn initial_state(&self, n: usize) -> Result<DensityMatrix> {
        match self.init.mode {
            InitMode::Singletons => DensityMatrix::zero_state(n),
            InitMode::Giant => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.init.seed);
                DensityMatrix::from_pure(&random_pure_state(n, &mut rng))
            }
        }
    }
}

/// Two qubit sets and their particle distance (closest members).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub distance: usize,
}

/// Entanglement of formation of `target` within `rho`.
pub fn target_eof(rho: &DensityMatrix, target: &Target) -> Result<f64> {
    if target.a.len() == 1 && target.b.len() == 1 {
        let pair = reduced_density_matrix(rho, &[target.a[0], target.b[0]])?;
        return Ok(eof_two_qubit(&pair)?.value);
    }
    let joint: Vec<usize> = target.a.iter().chain(&target.b).copied().collect();
    let reduced = reduced_density_matrix(rho, &joint)?;
    let bip = Bipartition::new(
        (0..target.a.len()).collect(),
        (target.a.len()..joint.len()).collect(),
    )?;
    let opts = MinimizeOptions {
        restarts: 8,
        ..Default::default()
    };
    Ok(eof_minimize(&reduced, &bip, &opts)?.value)
}

/// Entanglement history and time average of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub target: Target,
    /// `E_f` at `t = 0..=T`.
    pub values: Vec<f64>,
    pub average: f64,
}

/// Evolve the configured circuit and record the entanglement of every
/// target at every step, then average over time.
pub fn time_averaged_entanglement(config: &ExperimentConfig) -> Result<Vec<TargetSeries>> {
    config.validate()?;
    let targets = config.targets()?;
    let circuit = config.circuit()?;
    let base = config.spec()?;
    let steps = base.steps().max(circuit.depth());
    let limit = match config.averaging {
        Averaging::Horizon => None,
        Averaging::Limit { tol, max_steps } => Some((tol, max_steps.max(steps))),
    };
    let spec = base.with_steps(limit.map_or(steps, |(_, max)| max));
    let noise = NoiseChannelSpec::from_kind(config.model.noise, config.model.eta);
    let options = EvolveOptions {
        max_qubits: config.max_qubits,
        schedule_checked: true,
    };
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];
    let rho0 = config.initial_state(spec.particles())?;

    let mut settled = false;
    evolve_circuit(&spec, &circuit, &noise, rho0, options, |t, rho| {
        for (series, target) in values.iter_mut().zip(&targets) {
            series.push(target_eof(rho, target)?);
        }
        if let Some((tol, _)) = limit {
            if t > steps && values.iter().all(|v| (v[t] - v[t - 1]).abs() < tol) {
                settled = true;
                return Ok(ControlFlow::Break(()));
            }
        }
        Ok(ControlFlow::Continue(()))
    })?;
    if limit.is_some() && !settled {
        return Err(Error::Method(format!(
            "entanglement did not settle within {} steps",
            spec.steps()
        )));
    }
    Ok(targets
        .into_iter()
        .zip(values)
        .map(|(target, values)| {
            let average = match limit {
                None => values.iter().sum::<f64>() / values.len() as f64,
                Some(_) => *values.last().expect("at least one step"),
            };
            TargetSeries {
                target,
                values,
                average,
            }
        })
        .collect())
}

/// Entanglement length from averages versus distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LengthEstimate {
    /// Positive fitted slope.
    Finite {
        length: f64,
        upper: f64,
        fit: DecayFit,
    },
    /// Slope not positive: no decay resolved.
    Unbounded { fit: DecayFit },
    /// Fewer than three distances above the floor; every distance from
    /// `first_below` on is below it, which caps the length at
    /// `first_below / ln(1 / floor)`.
    BelowResolution { first_below: usize, upper: f64 },
}

impl LengthEstimate {
    /// Point estimate (the cap for unresolved lengths).
    pub fn value(&self) -> f64 {
        match self {
            LengthEstimate::Finite { length, .. } => *length,
            LengthEstimate::Unbounded { .. } => f64::INFINITY,
            LengthEstimate::BelowResolution { upper, .. } => *upper,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            LengthEstimate::Finite { upper, .. } => *upper,
            LengthEstimate::Unbounded { .. } => f64::INFINITY,
            LengthEstimate::BelowResolution { upper, .. } => *upper,
        }
    }

    pub fn fit(&self) -> Option<&DecayFit> {
        match self {
            LengthEstimate::Finite { fit, .. } | LengthEstimate::Unbounded { fit } => Some(fit),
            LengthEstimate::BelowResolution { .. } => None,
        }
    }
}

/// Largest average at each distance: the slowest-decaying choice of sets.
pub fn strongest_by_distance(series: &[TargetSeries]) -> Vec<(usize, f64)> {
    let mut best: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for s in series {
        let e = best.entry(s.target.distance).or_insert(f64::NEG_INFINITY);
        *e = e.max(s.average);
    }
    best.into_iter().collect()
}

/// Fit `-ln <E_f>` against distance. Values below [`EF_FLOOR`] are dropped
/// and each kept point carries the floor as its uncertainty.
pub fn estimate_entanglement_length(points: &[(usize, f64)]) -> Result<LengthEstimate> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no distances to fit".into()));
    }
    let usable: Vec<DecayPoint> = points
        .iter()
        .filter(|&&(_, v)| v >= EF_FLOOR)
        .map(|&(d, v)| DecayPoint {
            distance: d as f64,
            value: v,
            sigma: Some(EF_FLOOR),
        })
        .collect();
    if usable.len() < 3 {
        let first_below = points
            .iter()
            .filter(|&&(_, v)| v < EF_FLOOR)
            .map(|&(d, _)| d)
            .min()
            .ok_or_else(|| {
                Error::InsufficientData(format!("{} distance(s), need 3", points.len()))
            })?;
        if points
            .iter()
            .any(|&(d, v)| d > first_below && v >= EF_FLOOR)
        {
            return Err(Error::InsufficientData(
                "averages below the floor are followed by resolved ones".into(),
            ));
        }
        return Ok(LengthEstimate::BelowResolution {
            first_below,
            upper: first_below.max(1) as f64 / (1.0 / EF_FLOOR).ln(),
        });
    }
    let fit = fit_decay(&usable)?;
    Ok(if fit.slope > 0.0 {
        LengthEstimate::Finite {
            length: fit.length(),
            upper: fit.length_upper(),
            fit,
        }
    } else {
        LengthEstimate::Unbounded { fit }
    })
}

/// Correlation length measured on the top layer of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiMeasurement {
    pub p: f64,
    pub pooled: Vec<TauEstimate>,
    pub estimate: LengthEstimate,
}

/// Measure `xi(p)` between top-layer nodes of the lattice of `spec`.
///
/// When no connection beyond the nearest distances is seen the length is
/// capped by `first_unseen / ln(samples)`.
pub fn measure_xi(spec: &LatticeSpec, p: f64, samples: u64, seed: u64) -> Result<XiMeasurement> {
    let lattice = percolation_lattice(spec)?;
    let pairs = top_layer_pairs(&lattice, &PairSelection::All)?;
    let estimates = tau_estimate(&lattice, p, &pairs, samples, seed)?;
    let pooled: Vec<TauEstimate> = pool_by_distance(&estimates)
        .into_iter()
        .filter(|e| e.distance > 0)
        .collect();
    let estimate = match fit_correlation_length(&pooled) {
        Ok(fit) if fit.slope > 0.0 => LengthEstimate::Finite {
            length: fit.length(),
            upper: fit.length_upper(),
            fit,
        },
        Ok(fit) => LengthEstimate::Unbounded { fit },
        Err(Error::DegenerateFit(_)) | Err(Error::InsufficientData(_)) => {
            let first_below = pooled
                .iter()
                .find(|e| e.hits < crate::percolation::MIN_FIT_HITS)
                .map(|e| e.distance)
                .ok_or_else(|| Error::InsufficientData("too few distances to fit xi".into()))?;
            LengthEstimate::BelowResolution {
                first_below,
                upper: first_below.max(1) as f64 / (samples as f64).ln(),
            }
        }
        Err(e) => return Err(e),
    };
    Ok(XiMeasurement {
        p,
        pooled,
        estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: usize,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub distance: usize,
    pub eof: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Compare every recorded `E_f` with the distance bound at `xi`, using the
/// two-term form for the giant initial state.
pub fn theorem1_check(
    config: &ExperimentConfig,
    series: &[TargetSeries],
    xi: f64,
) -> Result<Vec<BoundRow>> {
    if !xi.is_finite() {
        return Err(Error::Config(format!(
            "no finite correlation length at p = {}; the bound is unavailable",
            1.0 - config.model.eta
        )));
    }
    let n = config.spec()?.particles();
    let mut rows = Vec::new();
    for s in series {
        for (t, &eof) in s.values.iter().enumerate() {
            let correction = (config.init.mode == InitMode::Giant).then_some((t as f64, n));
            let bound = theorem1_bound(
                s.target.a.len(),
                s.target.b.len(),
                s.target.distance as f64,
                xi,
                correction,
            )?;
            rows.push(BoundRow {
                t,
                a: s.target.a.clone(),
                b: s.target.b.clone(),
                distance: s.target.distance,
                eof,
                bound,
                pass: eof <= bound + BOUND_TOL,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    /// Every step of every target is within the distance bound.
    pub bound_holds: bool,
    /// The entanglement length does not exceed the correlation length's
    /// upper confidence limit.
    pub mu_within_xi: bool,
}

/// Entanglement-length report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntLenReport {
    pub config: ExperimentConfig,
    pub series: Vec<TargetSeries>,
    pub by_distance: Vec<(usize, f64)>,
    pub mu: LengthEstimate,
    pub xi: Option<XiMeasurement>,
    pub bound_rows: Vec<BoundRow>,
    pub verdicts: Option<Verdicts>,
}

impl EntLenReport {
    /// CSV companion: `distance,a,b,average`.
    pub fn to_csv(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::from("distance,a,b,average\n");
        for s in &self.series {
            out.push_str(&format!(
                "{},{},{},{:.12e}\n",
                s.target.distance,
                join(&s.target.a),
                join(&s.target.b),
                s.average
            ));
        }
        out
    }
}

/// Run the full study. The correlation length is measured at `p = 1 - eta`
/// on the lattice of the same spec unless the noise rate is zero, where no
/// finite length exists and only the entanglement length is reported.
pub fn run_entlen(config: &ExperimentConfig) -> Result<EntLenReport> {
    let series = time_averaged_entanglement(config)?;
    let by_distance = strongest_by_distance(&series);
    let mu = estimate_entanglement_length(&by_distance)?;
    let spec = config.spec()?;
    let p = 1.0 - config.model.eta;
    let (xi, bound_rows, verdicts) = if config.model.eta > 0.0 {
        let seed = derive_seed(config.percolation.seed, 0);
        let xi = measure_xi(&spec, p, config.percolation.samples, seed)?;
        let upper = xi.estimate.upper();
        let rows = theorem1_check(config, &series, upper)?;
        let verdicts = Verdicts {
            bound_holds: rows.iter().all(|r| r.pass),
            mu_within_xi: mu.value() <= upper,
        };
        (Some(xi), rows, Some(verdicts))
    } else {
        (None, Vec::new(), None)
    };
    Ok(EntLenReport {
        config: config.clone(),
        series,
        by_distance,
        mu,
        xi,
        bound_rows,
        verdicts,
    })
}

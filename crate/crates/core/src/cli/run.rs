//! Subcommand bodies. Each takes a resolved configuration and returns its
//! outputs in memory, so a run and its replay share one code path.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::verify::{run_suite, Suite};
use crate::cluster_dynamics::{evolve_clusters, InitMode};
use crate::entanglement::{eof_minimize, eof_two_qubit, Bipartition, EofResult, MinimizeOptions};
use crate::error::{Error, Result};
use crate::experiments::{
    run_entlen, Averaging, CircuitConfig, CircuitKind, ExperimentConfig, InitConfig, ModelConfig,
    PercolationConfig,
};
use crate::lattice::{
    build_spacetime_graph, giant_initial_augmentation, percolation_lattice, LatticeSpec,
};
use crate::percolation::{
    crossing_lattice, estimate_pc, fit_correlation_length, p_grid, pool_by_distance, sample_edges,
    tau_csv, tau_estimate, top_layer_pairs, PairSelection,
};
use crate::quantum::{
    evolve_circuit, ghz_state, read_density_file, reduced_density_matrix, write_density,
    write_density_csv, EvolveOptions, NoiseChannelSpec, NoiseKind, DEFAULT_MAX_QUBITS,
};

/// One file produced by a run, keyed by role (`out`, `csv`).
#[derive(Debug, Clone)]
pub struct Artifact {
    pub role: &'static str,
    pub bytes: Vec<u8>,
    /// Printable to standard output when no path is given.
    pub text: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Produced {
    pub artifacts: Vec<Artifact>,
    /// Human-readable result line(s) for standard output.
    pub summary: String,
    /// A verification suite found a failure.
    pub failed: bool,
}

fn text(role: &'static str, s: String) -> Artifact {
    Artifact {
        role,
        bytes: s.into_bytes(),
        text: true,
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Format(e.to_string()))
}

pub(crate) fn parse_config<T: DeserializeOwned>(sub: &str, config: &Value) -> Result<T> {
    serde_json::from_value(config.clone()).map_err(|e| Error::Config(format!("{sub}: {e}")))
}

fn probability(flag: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::out_of_range(flag, value, "[0, 1]"))
    }
}

/// Lattice from `--dim`/`--sides`/`--steps`; one side with `--dim d` means a
/// hypercube.
pub(crate) fn lattice_spec(
    dim: Option<usize>,
    sides: &[usize],
    steps: usize,
) -> Result<LatticeSpec> {
    if sides.is_empty() {
        return Err(Error::Config("--sides is required".into()));
    }
    let sides = match dim {
        Some(d) if sides.len() == 1 => vec![sides[0]; d],
        Some(d) if sides.len() != d => {
            return Err(Error::Config(format!(
                "--sides has {} entries but --dim is {d}",
                sides.len()
            )))
        }
        _ => sides.to_vec(),
    };
    LatticeSpec::new(sides, steps)
}

fn default_samples() -> u64 {
    100_000
}

fn default_pairs() -> String {
    "all".into()
}

fn default_init() -> InitMode {
    InitMode::Singletons
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PercolateConfig {
    pub p: f64,
    #[serde(default)]
    pub dim: Option<usize>,
    pub sides: Vec<usize>,
    pub steps: usize,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pairs")]
    pub pairs: String,
    #[serde(default = "default_init")]
    pub init: InitMode,
}

fn percolate(c: PercolateConfig) -> Result<Produced> {
    probability("--p", c.p)?;
    let spec = lattice_spec(c.dim, &c.sides, c.steps)?;
    let mut lattice = percolation_lattice(&spec)?;
    if c.init == InitMode::Giant {
        lattice = giant_initial_augmentation(&lattice);
    }
    let selection: PairSelection = c.pairs.parse()?;
    let pairs = top_layer_pairs(&lattice, &selection)?;
    let estimates = tau_estimate(&lattice, c.p, &pairs, c.samples, c.seed)?;
    let summary = match fit_correlation_length(&pool_by_distance(&estimates)) {
        Ok(fit) => format!(
            "{} pairs; correlation length {:.4} (upper {:.4}, R^2 {:.4})",
            pairs.len(),
            fit.length(),
            fit.length_upper(),
            fit.r_squared
        ),
        Err(e) => format!("{} pairs; no decay fit: {e}", pairs.len()),
    };
    Ok(Produced {
        artifacts: vec![text("out", tau_csv(&estimates))],
        summary,
        failed: false,
    })
}

fn default_sizes() -> Vec<usize> {
    vec![32, 64, 128]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PcScanConfig {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "p_min")]
    pub p_min: f64,
    #[serde(default = "p_max")]
    pub p_max: f64,
    #[serde(default = "p_step")]
    pub p_step: f64,
    #[serde(default = "scan_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn p_min() -> f64 {
    0.40
}
fn p_max() -> f64 {
    0.60
}
fn p_step() -> f64 {
    0.01
}
fn scan_samples() -> u64 {
    2000
}

fn pc_scan(c: PcScanConfig) -> Result<Produced> {
    probability("--p-min", c.p_min)?;
    probability("--p-max", c.p_max)?;
    let family = c
        .sizes
        .iter()
        .map(|&l| crossing_lattice(c.dim, l))
        .collect::<Result<Vec<_>>>()?;
    let grid = p_grid(c.p_min, c.p_max, c.p_step)?;
    let est = estimate_pc(&family, &grid, c.samples, c.seed)?;
    let summary = format!("p_c = {:.4} +/- {:.4}", est.pc, est.uncertainty);
    Ok(Produced {
        artifacts: vec![text("out", json(&est)?)],
        summary,
        failed: false,
    })
}

fn default_noise() -> NoiseKind {
    NoiseKind::Collapse
}

fn default_max_qubits() -> usize {
    DEFAULT_MAX_QUBITS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvolveConfig {
    pub eta: f64,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub sides: Vec<usize>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_init")]
    pub init: InitMode,
    /// Without a circuit only the cluster dynamics run.
    #[serde(default)]
    pub circuit: Option<CircuitKind>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub mid: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default = "default_noise")]
    pub model: NoiseKind,
    #[serde(default = "default_max_qubits")]
    pub max_qubits: usize,
}

fn evolve(c: EvolveConfig, wanted: &BTreeSet<&str>) -> Result<Produced> {
    probability("--eta", c.eta)?;
    let Some(kind) = c.circuit else {
        let steps = c
            .steps
            .ok_or_else(|| Error::Config("--steps is required".into()))?;
        let spec = lattice_spec(c.dim, &c.sides, steps)?;
        let r = sample_edges(spec.particles() * steps, 1.0 - c.eta, c.seed, 0);
        let trajectory = evolve_clusters(&spec, &r, c.init)?;
        let summary = format!(
            "{} particles, {steps} steps, {} clusters at the end",
            spec.particles(),
            trajectory.at(steps).components()
        );
        return Ok(Produced {
            artifacts: vec![text("out", trajectory.to_csv())],
            summary,
            failed: false,
        });
    };
    let ghz = kind == CircuitKind::Ghz;
    let sides = match (ghz, c.m, c.mid, c.q) {
        (true, Some(m), Some(mid), Some(q)) if c.sides.is_empty() => vec![m + mid + q],
        (true, ..) if c.sides.is_empty() => {
            return Err(Error::Config(
                "--circuit ghz needs --m, --mid and --q".into(),
            ))
        }
        _ => lattice_spec(c.dim, &c.sides, 0)?.sides().to_vec(),
    };
    let mut exp = ExperimentConfig {
        model: ModelConfig {
            sides,
            steps: c.steps.unwrap_or(0),
            eta: c.eta,
            noise: c.model,
        },
        circuit: CircuitConfig {
            kind,
            seed: c.seed,
            m: c.m,
            mid: c.mid,
            q: c.q,
        },
        init: InitConfig {
            mode: c.init,
            seed: c.seed,
        },
        pairs: None,
        percolation: PercolationConfig::default(),
        averaging: Averaging::Horizon,
        max_qubits: c.max_qubits,
    };
    if c.steps.is_none() {
        if ghz {
            exp.model.steps = exp.circuit()?.depth();
        } else {
            return Err(Error::Config("--steps is required".into()));
        }
    }
    exp.validate()?;
    let circuit = exp.circuit()?;
    let base = exp.spec()?;
    let spec = base.with_steps(base.steps().max(circuit.depth()));
    let rho0 = exp.initial_state(spec.particles())?;
    let noise = NoiseChannelSpec::from_kind(c.model, c.eta);
    let options = EvolveOptions {
        max_qubits: c.max_qubits,
        schedule_checked: true,
    };
    let rho = evolve_circuit(&spec, &circuit, &noise, rho0, options, |_, _| {
        Ok(ControlFlow::Continue(()))
    })?;

    let mut summary = format!(
        "{} qubits, {} steps, trace {:.12}",
        rho.qubits(),
        spec.steps(),
        rho.trace().re
    );
    if ghz {
        let target = ghz_state(c.m.unwrap_or(0), c.mid.unwrap_or(0), c.q.unwrap_or(0));
        summary.push_str(&format!(
            ", GHZ fidelity {:.12}",
            rho.fidelity_pure(&target)?
        ));
    }
    let mut bytes = Vec::new();
    write_density(&mut bytes, &rho)?;
    let mut artifacts = vec![Artifact {
        role: "out",
        bytes,
        text: false,
    }];
    if wanted.contains("csv") {
        artifacts.push(text("csv", write_density_csv(&rho)));
    }
    Ok(Produced {
        artifacts,
        summary,
        failed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EofChoice {
    /// Closed form for a single-qubit pair, minimization otherwise.
    Auto,
    Closed,
    Minimize,
}

fn default_choice() -> EofChoice {
    EofChoice::Auto
}
fn default_restarts() -> usize {
    32
}
fn default_tol() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EofConfig {
    pub partition: String,
    #[serde(default = "default_choice")]
    pub method: EofChoice,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ensemble_size: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn eof(c: EofConfig, inputs: &BTreeMap<String, PathBuf>) -> Result<Produced> {
    let path = inputs
        .get("in")
        .ok_or_else(|| Error::Config("--in is required".into()))?;
    let rho = read_density_file(path)?;
    let bip: Bipartition = c.partition.parse()?;
    bip.check(rho.qubits())?;
    let joint = bip.joint();
    let reduced = if joint.len() == rho.qubits() && joint.iter().enumerate().all(|(i, &q)| i == q) {
        rho
    } else {
        reduced_density_matrix(&rho, &joint)?
    };
    let local = Bipartition::new(
        (0..bip.a.len()).collect(),
        (bip.a.len()..joint.len()).collect(),
    )?;
    let pair = bip.a.len() == 1 && bip.b.len() == 1;
    let result: EofResult = match (c.method, pair) {
        (EofChoice::Closed, false) => {
            return Err(Error::Method(
                "--method closed needs one qubit on each side".into(),
            ))
        }
        (EofChoice::Closed | EofChoice::Auto, true) => eof_two_qubit(&reduced)?,
        _ => {
            let opts = MinimizeOptions {
                ensemble_size: c.ensemble_size,
                restarts: c.restarts,
                tol: c.tol,
                seed: c.seed,
                ..Default::default()
            };
            eof_minimize(&reduced, &local, &opts)?
        }
    };
    let method = serde_json::to_value(result.method).map_err(|e| Error::Format(e.to_string()))?;
    let summary = format!(
        "E_f = {:.12} ebits ({})",
        result.value,
        method.as_str().unwrap_or("?")
    );
    Ok(Produced {
        artifacts: vec![text("out", json(&result)?)],
        summary,
        failed: false,
    })
}

fn entlen(config: ExperimentConfig) -> Result<Produced> {
    let report = run_entlen(&config)?;
    let mut summary = format!("entanglement length {:.4}", report.mu.value());
    if let Some(xi) = &report.xi {
        summary.push_str(&format!(
            ", correlation length {:.4} (upper {:.4})",
            xi.estimate.value(),
            xi.estimate.upper()
        ));
    }
    if let Some(v) = &report.verdicts {
        summary.push_str(&format!(
            ", bound holds: {}, mu <= xi: {}",
            v.bound_holds, v.mu_within_xi
        ));
    }
    Ok(Produced {
        artifacts: vec![text("out", json(&report)?), text("csv", report.to_csv())],
        summary,
        failed: false,
    })
}

fn default_trials() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: Suite,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
}

fn verify(c: VerifyConfig) -> Result<Produced> {
    let report = run_suite(c.suite, c.trials, c.seed)?;
    let summary = match &report.first_failure {
        None => format!("{} trials passed", report.checked),
        Some(msg) => format!("FAILED after {} trials: {msg}", report.checked),
    };
    Ok(Produced {
        artifacts: vec![text("out", json(&report)?)],
        summary,
        failed: !report.passed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DumpGraphConfig {
    #[serde(default)]
    pub dim: Option<usize>,
    pub sides: Vec<usize>,
    pub steps: usize,
}

fn dump_graph(c: DumpGraphConfig) -> Result<Produced> {
    let graph = build_spacetime_graph(&lattice_spec(c.dim, &c.sides, c.steps)?)?;
    let summary = format!(
        "{} vertices, {} vertical and {} interaction edges",
        graph.vertex_count(),
        graph.vertical_edge_count(),
        graph.interaction_edge_count()
    );
    Ok(Produced {
        artifacts: vec![text("out", graph.to_csv())],
        summary,
        failed: false,
    })
}

/// Run subcommand `sub` on a resolved configuration. `wanted` lists the
/// optional output roles that have a destination.
pub fn execute(
    sub: &str,
    config: &Value,
    inputs: &BTreeMap<String, PathBuf>,
    wanted: &BTreeSet<&str>,
) -> Result<Produced> {
    match sub {
        "percolate" => percolate(parse_config(sub, config)?),
        "pc-scan" => pc_scan(parse_config(sub, config)?),
        "evolve" => evolve(parse_config(sub, config)?, wanted),
        "eof" => eof(parse_config(sub, config)?, inputs),
        "entlen" => {
            let cfg: ExperimentConfig = parse_config(sub, config)?;
            cfg.validate()?;
            entlen(cfg)
        }
        "verify" => verify(parse_config(sub, config)?),
        "dump-graph" => dump_graph(parse_config(sub, config)?),
        other => Err(Error::Config(format!("unknown subcommand '{other}'"))),
    }
}

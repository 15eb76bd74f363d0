//! Self-check suites run by `qperc verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster_dynamics::{verify_correspondence, InitMode};
use crate::error::Result;
use crate::lattice::{build_spacetime_graph, percolation_lattice, LatticeSpec};
use crate::percolation::{
    connected_components, derive_seed, sample_edges, NoiseRealization, UnionFind,
};
use crate::quantum::{
    apply_noise_channel, random_pure_state, trace_distance, DensityMatrix, NoiseChannelSpec, C64,
};

const SQUARES: [(usize, usize); 9] = [
    (2, 2),
    (2, 3),
    (3, 2),
    (2, 4),
    (4, 2),
    (3, 3),
    (2, 5),
    (3, 5),
    (4, 4),
];
const ETAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const CHANNEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Cluster dynamics against percolation connectivity, product start.
    Correspondence,
    /// Same, starting from one giant cluster.
    Giant,
    /// Contracted lattice against breadth-first search on the space-time graph.
    Contraction,
    /// Dephasing against collapse, and depolarizing trace preservation.
    Channels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: u64,
    pub seed: u64,
    /// Trials run before stopping; equals `trials` when all passed.
    pub checked: u64,
    pub passed: bool,
    pub first_failure: Option<String>,
}

/// Random instance `i`: alternating chains (n <= 16) and small squares
/// (n <= 16), up to 16 steps, noise rate from a fixed list.
pub fn random_instance(seed: u64, i: u64) -> Result<(LatticeSpec, f64, NoiseRealization)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i));
    let sides = if i.is_multiple_of(2) {
        vec![rng.random_range(2..=16)]
    } else {
        let (a, b) = SQUARES[rng.random_range(0..SQUARES.len())];
        vec![a, b]
    };
    let steps = rng.random_range(0..=16);
    let eta = ETAS[(i as usize / 2) % ETAS.len()];
    let spec = LatticeSpec::new(sides, steps)?;
    let r = sample_edges(spec.particles() * steps, 1.0 - eta, seed, i);
    Ok((spec, eta, r))
}

/// Run `trials` checks, stopping at the first failure.
pub fn run_suite(suite: Suite, trials: u64, seed: u64) -> Result<SuiteReport> {
    let mut first_failure = None;
    let mut checked = 0;
    for i in 0..trials {
        checked += 1;
        if let Some(msg) = check_one(suite, seed, i)? {
            first_failure = Some(format!("trial {i}: {msg}"));
            break;
        }
    }
    Ok(SuiteReport {
        suite,
        trials,
        seed,
        checked,
        passed: first_failure.is_none(),
        first_failure,
    })
}

fn check_one(suite: Suite, seed: u64, i: u64) -> Result<Option<String>> {
    match suite {
        Suite::Correspondence | Suite::Giant => {
            let init = if suite == Suite::Giant {
                InitMode::Giant
            } else {
                InitMode::Singletons
            };
            let (spec, eta, r) = random_instance(seed, i)?;
            let c = verify_correspondence(&spec, &r, init)?;
            Ok(c.mismatch.map(|(t, a, b)| {
                format!(
                    "sides {:?}, T={}, eta={eta}: particles {a},{b} disagree at t={t}",
                    spec.sides(),
                    spec.steps()
                )
            }))
        }
        Suite::Contraction => {
            let (spec, _, r) = random_instance(seed, i)?;
            Ok((!contraction_agrees(&spec, &r)?).then(|| {
                format!(
                    "sides {:?}, T={}: partitions differ",
                    spec.sides(),
                    spec.steps()
                )
            }))
        }
        Suite::Channels => channel_check(seed, i),
    }
}

/// Components of the contracted lattice equal those of the space-time graph
/// with every interaction edge and the open vertical edges.
fn contraction_agrees(spec: &LatticeSpec, r: &NoiseRealization) -> Result<bool> {
    let lattice = percolation_lattice(spec)?;
    let labels = connected_components(&lattice, r)?;
    let graph = build_spacetime_graph(spec)?;
    let mut uf = UnionFind::new(graph.vertex_count());
    for t in 1..=spec.steps() {
        for &(x, y) in graph.interactions(t) {
            uf.union(graph.vertex_id(x, t), graph.vertex_id(y, t));
        }
    }
    for e in 0..graph.vertical_edge_count() {
        if r.is_open(e) {
            let (x, t) = graph.vertical_edge(e);
            uf.union(graph.vertex_id(x, t), graph.vertex_id(x, t + 1));
        }
    }
    let mut root_to_label = vec![usize::MAX; graph.vertex_count()];
    let mut label_to_root = vec![usize::MAX; lattice.node_count()];
    for t in 0..=spec.steps() {
        for x in 0..spec.particles() {
            let root = uf.find(graph.vertex_id(x, t));
            let label = labels.labels()[lattice.node_of(x, t)];
            if root_to_label[root] == usize::MAX {
                root_to_label[root] = label;
            }
            if label_to_root[label] == usize::MAX {
                label_to_root[label] = root;
            }
            if root_to_label[root] != label || label_to_root[label] != root {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn channel_check(seed: u64, i: u64) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i));
    let a = random_pure_state(1, &mut rng);
    let b = random_pure_state(1, &mut rng);
    let w: f64 = rng.random();
    let data: Vec<C64> = (0..4)
        .map(|k| {
            let (r, c) = (k / 2, k % 2);
            a[r] * a[c].conj() * w + b[r] * b[c].conj() * (1.0 - w)
        })
        .collect();
    let rho = DensityMatrix::from_entries(1, data)?;
    let eta: f64 = rng.random();
    let collapsed = apply_noise_channel(&rho, &NoiseChannelSpec::collapse(eta), 0)?;
    let dephased = apply_noise_channel(&rho, &NoiseChannelSpec::dephase(-(1.0 - eta).ln()), 0)?;
    let gap = trace_distance(&collapsed, &dephased)?;
    if gap >= CHANNEL_TOL {
        return Ok(Some(format!(
            "eta={eta}: collapse and dephasing differ by {gap:e}"
        )));
    }
    let depolarized = apply_noise_channel(&rho, &NoiseChannelSpec::depolarize(eta), 0)?;
    if let Err(e) = depolarized.validate() {
        return Ok(Some(format!("eta={eta}: depolarized state invalid: {e}")));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for suite in [
            Suite::Correspondence,
            Suite::Giant,
            Suite::Contraction,
            Suite::Channels,
        ] {
            let report = run_suite(suite, 60, 3).unwrap();
            assert!(report.passed, "{report:?}");
            assert_eq!(report.checked, 60);
        }
    }

    #[test]
    fn instances_are_reproducible() {
        let (s1, e1, r1) = random_instance(5, 17).unwrap();
        let (s2, e2, r2) = random_instance(5, 17).unwrap();
        assert_eq!((s1, e1, r1), (s2, e2, r2));
    }
}

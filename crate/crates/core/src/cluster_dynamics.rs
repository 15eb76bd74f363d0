//! Cluster dynamics of the mixture picture: interactions merge the clusters of
//! the two partners, a noise event detaches the particle into a singleton.
//!
//! Particle `x` is hit by noise after step `t` iff percolation edge
//! `t * n + x`, the vertical edge `(x, t) -> (x, t + 1)`, is closed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{pairs_at, LatticeSpec};
use crate::percolation::{ClusterPartition, NoiseRealization, UnionFind};

/// Partition of the particles at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Singletons,
    Giant,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singletons" | "product" => Ok(InitMode::Singletons),
            "giant" => Ok(InitMode::Giant),
            other => Err(Error::InvalidParameter(format!(
                "unknown initial mode '{other}' (expected singletons|giant)"
            ))),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMode::Singletons => "singletons",
            InitMode::Giant => "giant",
        })
    }
}

/// Particle partitions over time.
///
/// `interacted[t]` is the partition right after the interactions of step `t`
/// (the initial partition for `t = 0`); `settled[t]` is the partition after
/// the noise that follows it. The final layer has no noise, so
/// `settled[T] == interacted[T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrajectory {
    pub init: InitMode,
    pub interacted: Vec<ClusterPartition>,
    pub settled: Vec<ClusterPartition>,
}

impl ClusterTrajectory {
    pub fn steps(&self) -> usize {
        self.interacted.len() - 1
    }

    /// Partition at time `t` (after the interactions of step `t`).
    pub fn at(&self, t: usize) -> &ClusterPartition {
        &self.interacted[t]
    }

    /// CSV with columns `t,particle,cluster_id`, one row per particle and time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,particle,cluster_id\n");
        for (t, part) in self.interacted.iter().enumerate() {
            for (x, label) in part.labels().iter().enumerate() {
                out.push_str(&format!("{t},{x},{label}\n"));
            }
        }
        out
    }
}

/// Union-find over slots; every particle owns one live slot and a detached
/// particle moves to a fresh one.
struct Clusters {
    uf: UnionFind,
    slot: Vec<usize>,
}

impl Clusters {
    fn new(n: usize, init: InitMode) -> Self {
        let mut uf = UnionFind::new(n);
        if init == InitMode::Giant {
            for x in 1..n {
                uf.union(0, x);
            }
        }
        Clusters {
            uf,
            slot: (0..n).collect(),
        }
    }

    fn merge(&mut self, a: usize, b: usize) {
        self.uf.union(self.slot[a], self.slot[b]);
    }

    fn detach(&mut self, x: usize) {
        self.slot[x] = self.uf.push();
    }

    fn partition(&mut self) -> ClusterPartition {
        let mut first: HashMap<usize, usize> = HashMap::with_capacity(self.slot.len());
        let labels = (0..self.slot.len())
            .map(|x| {
                let root = self.uf.find(self.slot[x]);
                *first.entry(root).or_insert(x)
            })
            .collect();
        ClusterPartition::from_labels(labels)
    }
}

fn check_shape(spec: &LatticeSpec, r: &NoiseRealization) -> Result<()> {
    let expected = spec.particles() * spec.steps();
    if r.edge_count() != expected {
        return Err(Error::Shape(format!(
            "realization has {} edges, the {}-particle {}-step lattice has {expected}",
            r.edge_count(),
            spec.particles(),
            spec.steps()
        )));
    }
    Ok(())
}

/// Run merge/detach dynamics driven by the noise pattern of `r`.
pub fn evolve_clusters(
    spec: &LatticeSpec,
    r: &NoiseRealization,
    init: InitMode,
) -> Result<ClusterTrajectory> {
    check_shape(spec, r)?;
    let n = spec.particles();
    let mut clusters = Clusters::new(n, init);
    let mut interacted = Vec::with_capacity(spec.steps() + 1);
    let mut settled = Vec::with_capacity(spec.steps() + 1);
    for t in 0..=spec.steps() {
        if t > 0 {
            for (a, b) in pairs_at(spec, t) {
                clusters.merge(a, b);
            }
        }
        let part = clusters.partition();
        if t == spec.steps() {
            settled.push(part.clone());
            interacted.push(part);
            break;
        }
        interacted.push(part);
        for x in 0..n {
            if !r.is_open(t * n + x) {
                clusters.detach(x);
            }
        }
        settled.push(clusters.partition());
    }
    Ok(ClusterTrajectory {
        init,
        interacted,
        settled,
    })
}

/// Outcome of comparing cluster co-membership with percolation connectivity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub holds: bool,
    /// First `(t, a, b)` where the two sides disagree.
    pub mismatch: Option<(usize, usize, usize)>,
}

/// Check, for every time `t` and particle pair, that the cluster dynamics
/// puts `a` and `b` together iff `(a, t)` and `(b, t)` are joined by open
/// percolation edges within layers `0..=t`.
///
/// With [`InitMode::Giant`] the percolation side includes the always-open
/// chain through layer 0.
pub fn verify_correspondence(
    spec: &LatticeSpec,
    r: &NoiseRealization,
    init: InitMode,
) -> Result<Correspondence> {
    let trajectory = evolve_clusters(spec, r, init)?;
    let lattice = crate::lattice::percolation_lattice(spec)?;
    let n = spec.particles();
    let mut uf = UnionFind::new(lattice.node_count());
    if init == InitMode::Giant {
        let layer0 = lattice.layer_nodes(0);
        for v in layer0.clone().skip(1) {
            uf.union(layer0.start, v);
        }
    }
    for t in 0..=spec.steps() {
        if t > 0 {
            for x in 0..n {
                let e = (t - 1) * n + x;
                if r.is_open(e) {
                    let (a, b) = lattice.edge_ends()[e];
                    uf.union(a as usize, b as usize);
                }
            }
        }
        let mut first: HashMap<usize, usize> = HashMap::with_capacity(n);
        let perc: Vec<usize> = (0..n)
            .map(|x| *first.entry(uf.find(lattice.node_of(x, t))).or_insert(x))
            .collect();
        let clusters = trajectory.at(t).labels();
        if perc != clusters {
            let mismatch = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .find(|&(a, b)| (perc[a] == perc[b]) != (clusters[a] == clusters[b]))
                .map(|(a, b)| (t, a, b));
            return Ok(Correspondence {
                holds: false,
                mismatch,
            });
        }
    }
    Ok(Correspondence {
        holds: true,
        mismatch: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::sample_edges;

    fn chain(n: usize, t: usize) -> LatticeSpec {
        LatticeSpec::chain(n, t).unwrap()
    }

    #[test]
    fn full_noise_leaves_singletons() {
        let spec = chain(6, 5);
        let r = sample_edges(30, 0.0, 1, 0);
        let traj = evolve_clusters(&spec, &r, InitMode::Singletons).unwrap();
        for t in 0..5 {
            assert_eq!(traj.settled[t].components(), 6);
        }
        let giant = evolve_clusters(&spec, &r, InitMode::Giant).unwrap();
        assert_eq!(giant.at(0).components(), 1);
        assert_eq!(giant.settled[0].components(), 6);
    }

    #[test]
    fn noiseless_chain_merges() {
        let spec = chain(4, 2);
        let r = sample_edges(8, 1.0, 1, 0);
        let traj = evolve_clusters(&spec, &r, InitMode::Singletons).unwrap();
        assert_eq!(traj.at(1).labels(), &[0, 0, 2, 2]);
        assert_eq!(traj.at(2).components(), 1);
    }

    #[test]
    fn shape_mismatch() {
        let spec = chain(4, 2);
        let r = sample_edges(7, 0.5, 1, 0);
        assert!(matches!(
            evolve_clusters(&spec, &r, InitMode::Singletons),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn correspondence_on_extremes_and_random() {
        let spec = LatticeSpec::new(vec![3, 3], 6).unwrap();
        let edges = spec.particles() * spec.steps();
        for p in [0.0, 0.4, 1.0] {
            for index in 0..20 {
                let r = sample_edges(edges, p, 5, index);
                for init in [InitMode::Singletons, InitMode::Giant] {
                    let c = verify_correspondence(&spec, &r, init).unwrap();
                    assert!(c.holds, "{p} {index} {init} {:?}", c.mismatch);
                }
            }
        }
    }

    #[test]
    fn csv_rows() {
        let spec = chain(2, 1);
        let r = sample_edges(2, 1.0, 0, 0);
        let csv = evolve_clusters(&spec, &r, InitMode::Singletons)
            .unwrap()
            .to_csv();
        assert_eq!(csv, "t,particle,cluster_id\n0,0,0\n0,1,1\n1,0,0\n1,1,0\n");
    }
}

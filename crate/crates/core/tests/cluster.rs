//! Cluster dynamics against a list-of-sets simulation and percolation.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qperc::cluster_dynamics::{evolve_clusters, verify_correspondence, InitMode};
use qperc::lattice::{interaction_schedule, LatticeSpec};
use qperc::percolation::{sample_edges, ClusterPartition, NoiseRealization};

/// Clusters as explicit sets. Interactions union the two sets; noise on `x`
/// (closed edge `t*n + x`) removes it into a singleton.
struct SetClusters(Vec<BTreeSet<usize>>);

impl SetClusters {
    fn new(n: usize, init: InitMode) -> Self {
        match init {
            InitMode::Singletons => SetClusters((0..n).map(|x| BTreeSet::from([x])).collect()),
            InitMode::Giant => SetClusters(vec![(0..n).collect()]),
        }
    }

    fn find(&self, x: usize) -> usize {
        self.0.iter().position(|s| s.contains(&x)).unwrap()
    }

    fn merge(&mut self, a: usize, b: usize) {
        let (i, j) = (self.find(a), self.find(b));
        if i != j {
            let moved = std::mem::take(&mut self.0[j]);
            self.0[i].extend(moved);
            self.0.remove(j);
        }
    }

    fn detach(&mut self, x: usize) {
        let i = self.find(x);
        if self.0[i].len() > 1 {
            self.0[i].remove(&x);
            self.0.push(BTreeSet::from([x]));
        }
    }

    fn same_as(&self, part: &ClusterPartition) -> bool {
        let n = part.len();
        (0..n).all(|a| (0..n).all(|b| (self.find(a) == self.find(b)) == part.same(a, b)))
    }
}

fn check_against_sets(spec: &LatticeSpec, r: &NoiseRealization, init: InitMode) {
    let traj = evolve_clusters(spec, r, init).unwrap();
    let n = spec.particles();
    let mut sets = SetClusters::new(n, init);
    for t in 0..=spec.steps() {
        if t > 0 {
            for (a, b) in interaction_schedule(spec, t).unwrap() {
                sets.merge(a, b);
            }
        }
        assert!(
            sets.same_as(&traj.interacted[t]),
            "{spec:?} t={t} after interactions"
        );
        if t < spec.steps() {
            for x in 0..n {
                if !r.is_open(t * n + x) {
                    sets.detach(x);
                }
            }
        }
        assert!(sets.same_as(&traj.settled[t]), "{spec:?} t={t} after noise");
    }
}

#[test]
fn matches_set_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..400 {
        let spec = if i % 2 == 0 {
            LatticeSpec::chain(rng.random_range(2..=8), rng.random_range(0..=8)).unwrap()
        } else {
            LatticeSpec::new(vec![2, rng.random_range(2..=4)], rng.random_range(0..=8)).unwrap()
        };
        let eta: f64 = rng.random();
        let r = sample_edges(spec.particles() * spec.steps(), 1.0 - eta, 8, i);
        let init = if i % 3 == 0 {
            InitMode::Giant
        } else {
            InitMode::Singletons
        };
        check_against_sets(&spec, &r, init);
    }
}

#[test]
fn giant_correspondence_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for i in 0..1000 {
        let spec = LatticeSpec::chain(rng.random_range(2..=12), rng.random_range(0..=10)).unwrap();
        let r = sample_edges(spec.particles() * spec.steps(), rng.random(), 9, i);
        let c = verify_correspondence(&spec, &r, InitMode::Giant).unwrap();
        assert!(c.holds, "{spec:?}: {:?}", c.mismatch);
    }
}

#[test]
fn no_noise_and_full_noise() {
    let spec = LatticeSpec::chain(6, 5).unwrap();
    let edges = spec.particles() * spec.steps();
    let quiet = NoiseRealization::from_bits(1.0, 0, 0, vec![true; edges]);
    let traj = evolve_clusters(&spec, &quiet, InitMode::Singletons).unwrap();
    assert_eq!(traj.at(5).components(), 1);
    let loud = NoiseRealization::from_bits(0.0, 0, 0, vec![false; edges]);
    let traj = evolve_clusters(&spec, &loud, InitMode::Giant).unwrap();
    for t in 0..5 {
        assert_eq!(traj.settled[t].components(), 6);
    }
}

#[test]
fn wrong_realization_length_is_rejected() {
    let spec = LatticeSpec::chain(4, 3).unwrap();
    let r = sample_edges(11, 0.5, 0, 0);
    assert!(evolve_clusters(&spec, &r, InitMode::Singletons).is_err());
}

#[test]
fn csv_has_one_row_per_particle_and_time() {
    let spec = LatticeSpec::chain(5, 3).unwrap();
    let r = sample_edges(15, 0.5, 1, 0);
    let csv = evolve_clusters(&spec, &r, InitMode::Singletons)
        .unwrap()
        .to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,particle,cluster_id"));
    assert_eq!(lines.count(), 5 * 4);
}

proptest! {
    #[test]
    fn correspondence_on_squares(seed in 0u64..10_000, side in 2usize..5, steps in 0usize..8, eta in 0.0f64..1.0) {
        let spec = LatticeSpec::new(vec![side, side], steps).unwrap();
        let r = sample_edges(spec.particles() * steps, 1.0 - eta, seed, 0);
        for init in [InitMode::Singletons, InitMode::Giant] {
            prop_assert!(verify_correspondence(&spec, &r, init).unwrap().holds);
        }
    }
}

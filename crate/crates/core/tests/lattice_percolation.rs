//! Lattice construction and percolation sampling against brute-force oracles.

use std::collections::VecDeque;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qperc::lattice::{interaction_schedule, percolation_lattice, LatticeSpec, PercolationLattice};
use qperc::percolation::{
    branching_upper_tree, cluster_size_stats, connected_components, sample_edges, tau_estimate,
    top_layer_pairs, NoiseRealization, PairSelection, UnionFind,
};

/// Breadth-first components of the space-time graph: interaction edges are
/// always present, vertical edge `t*n + x` joins `(x, t)` to `(x, t+1)` when
/// open. Returns a label per vertex `t*n + x`.
fn spacetime_bfs(spec: &LatticeSpec, open: &dyn Fn(usize) -> bool) -> Vec<usize> {
    let n = spec.particles();
    let steps = spec.steps();
    let mut adj = vec![Vec::new(); n * (steps + 1)];
    for t in 1..=steps {
        for (x, y) in interaction_schedule(spec, t).unwrap() {
            adj[t * n + x].push(t * n + y);
            adj[t * n + y].push(t * n + x);
        }
    }
    for t in 0..steps {
        for x in 0..n {
            if open(t * n + x) {
                adj[t * n + x].push((t + 1) * n + x);
                adj[(t + 1) * n + x].push(t * n + x);
            }
        }
    }
    let mut label = vec![usize::MAX; adj.len()];
    for s in 0..adj.len() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = s;
                    queue.push_back(w);
                }
            }
        }
    }
    label
}

fn small_spec(rng: &mut impl Rng) -> LatticeSpec {
    let sides = match rng.random_range(0..3) {
        0 => vec![rng.random_range(2..=6)],
        1 => vec![2, rng.random_range(2..=3)],
        _ => vec![rng.random_range(2..=3), 2, 2],
    };
    LatticeSpec::new(sides, rng.random_range(0..=4)).unwrap()
}

#[test]
fn contraction_matches_spacetime_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..300 {
        let spec = small_spec(&mut rng);
        let lattice = percolation_lattice(&spec).unwrap();
        let p: f64 = rng.random();
        let r = sample_edges(lattice.edge_count(), p, 5, i);
        let bfs = spacetime_bfs(&spec, &|e| r.is_open(e));
        let parts = connected_components(&lattice, &r).unwrap();
        let n = spec.particles();
        for u in 0..bfs.len() {
            for v in 0..bfs.len() {
                let (nu, nv) = (lattice.node_of(u % n, u / n), lattice.node_of(v % n, v / n));
                assert_eq!(
                    bfs[u] == bfs[v],
                    parts.same(nu, nv),
                    "spec {spec:?}, vertices {u} {v}"
                );
            }
        }
    }
}

#[test]
fn node_and_edge_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let spec = small_spec(&mut rng);
        let lattice = percolation_lattice(&spec).unwrap();
        let n = spec.particles();
        let merged: usize = (1..=spec.steps())
            .map(|t| interaction_schedule(&spec, t).unwrap().len())
            .sum();
        assert_eq!(lattice.node_count(), n * (spec.steps() + 1) - merged);
        assert_eq!(lattice.edge_count(), n * spec.steps());
        for t in 0..=spec.steps() {
            for x in 0..n {
                assert_eq!(lattice.node_layer(lattice.node_of(x, t)), t);
            }
        }
    }
}

/// Exact connection probability by summing over all `2^|E|` patterns.
fn exact_tau(lattice: &PercolationLattice, p: f64, a: usize, b: usize) -> f64 {
    let edges = lattice.edge_count();
    let mut total = 0.0;
    let mut uf = UnionFind::new(lattice.node_count());
    for mask in 0u32..(1 << edges) {
        uf.reset();
        for &(u, v) in lattice.fixed_edges() {
            uf.union(u as usize, v as usize);
        }
        for (e, &(u, v)) in lattice.edge_ends().iter().enumerate() {
            if mask >> e & 1 == 1 {
                uf.union(u as usize, v as usize);
            }
        }
        if uf.connected(a, b) {
            let k = mask.count_ones() as i32;
            total += p.powi(k) * (1.0 - p).powi(edges as i32 - k);
        }
    }
    total
}

#[test]
fn tau_matches_exhaustive_enumeration() {
    let samples = 200_000;
    for (spec, p) in [
        (LatticeSpec::chain(4, 2).unwrap(), 0.3),
        (LatticeSpec::chain(5, 3).unwrap(), 0.6),
        (LatticeSpec::new(vec![2, 2], 2).unwrap(), 0.5),
    ] {
        let lattice = percolation_lattice(&spec).unwrap();
        assert!(lattice.edge_count() <= 16);
        let pairs = top_layer_pairs(&lattice, &PairSelection::All).unwrap();
        let est = tau_estimate(&lattice, p, &pairs, samples, 9).unwrap();
        for (e, &(a, b)) in est.iter().zip(&pairs) {
            let exact = exact_tau(&lattice, p, a, b);
            let sigma = (exact * (1.0 - exact) / samples as f64).sqrt();
            assert!(
                (e.tau - exact).abs() <= 5.0 * sigma + 1e-12,
                "{spec:?} p={p} pair ({a},{b}): {} vs exact {exact}",
                e.tau
            );
        }
    }
}

#[test]
fn giant_augmentation_only_adds_connections() {
    let spec = LatticeSpec::chain(8, 4).unwrap();
    let plain = percolation_lattice(&spec).unwrap();
    let giant = qperc::lattice::giant_initial_augmentation(&plain);
    let pairs = top_layer_pairs(&plain, &PairSelection::All).unwrap();
    let a = tau_estimate(&plain, 0.4, &pairs, 20_000, 3).unwrap();
    let b = tau_estimate(&giant, 0.4, &pairs, 20_000, 3).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(y.hits >= x.hits);
    }
    assert!(b.iter().map(|e| e.hits).sum::<u64>() > a.iter().map(|e| e.hits).sum::<u64>());
}

fn mean_largest(l: usize, p: f64, samples: u64) -> f64 {
    let lattice = percolation_lattice(&LatticeSpec::chain(l, l).unwrap()).unwrap();
    let total: usize = (0..samples)
        .map(|i| {
            let r = sample_edges(lattice.edge_count(), p, 21, i);
            cluster_size_stats(&connected_components(&lattice, &r).unwrap()).max
        })
        .sum();
    total as f64 / samples as f64
}

#[test]
fn largest_cluster_scaling() {
    // Area grows 16x from L=16 to L=64.
    let sub = mean_largest(64, 0.3, 20) / mean_largest(16, 0.3, 20);
    let sup = mean_largest(64, 0.7, 20) / mean_largest(16, 0.7, 20);
    assert!(sub < 4.0, "sub-critical ratio {sub}");
    assert!(sup > 10.0, "super-critical ratio {sup}");
}

#[test]
fn branching_survival_fixed_point() {
    // Survival tends to the largest root of s = 1 - (1 - p s)^3.
    for p in [0.2, 1.0 / 3.0, 0.5, 0.9] {
        let s = branching_upper_tree(p, 20_000).unwrap();
        let mut lo = 1e-9;
        let mut hi = 1.0;
        let f = |s: f64| 1.0 - (1.0 - p * s).powi(3) - s;
        let root = if f(lo) <= 0.0 {
            0.0
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        assert!((s - root).abs() < 2e-2, "p={p}: {s} vs {root}");
    }
}

proptest! {
    #[test]
    fn schedule_pairs_are_disjoint_neighbors(
        sides in prop::collection::vec(2usize..6, 1..4),
        t in 1usize..9,
    ) {
        let spec = LatticeSpec::new(sides, 8).unwrap();
        let pairs = interaction_schedule(&spec, t).unwrap();
        let axis = (t - 1) % spec.dim();
        let mut used = vec![false; spec.particles()];
        for (x, y) in pairs {
            prop_assert!(!used[x] && !used[y]);
            used[x] = true;
            used[y] = true;
            prop_assert_eq!(y - x, spec.stride(axis));
            prop_assert_eq!(spec.coord(y, axis), spec.coord(x, axis) + 1);
            prop_assert_eq!(spec.particle_distance(x, y), 1);
        }
    }

    #[test]
    fn opening_more_edges_never_splits_clusters(seed in 0u64..1000, p in 0.05f64..0.9) {
        let spec = LatticeSpec::new(vec![3, 3], 3).unwrap();
        let lattice = percolation_lattice(&spec).unwrap();
        let lo = sample_edges(lattice.edge_count(), p, seed, 0);
        let hi = sample_edges(lattice.edge_count(), (p + 0.1).min(1.0), seed, 0);
        let (a, b) = (
            connected_components(&lattice, &lo).unwrap(),
            connected_components(&lattice, &hi).unwrap(),
        );
        for u in 0..lattice.node_count() {
            for v in 0..lattice.node_count() {
                if a.same(u, v) {
                    prop_assert!(b.same(u, v));
                }
            }
        }
    }

    #[test]
    fn realization_bits_round_trip(bits in prop::collection::vec(any::<bool>(), 0..64)) {
        let r = NoiseRealization::from_bits(0.5, 1, 2, bits.clone());
        prop_assert_eq!(r.bits(), &bits[..]);
        prop_assert_eq!(r.open_count(), bits.iter().filter(|&&b| b).count());
    }
}

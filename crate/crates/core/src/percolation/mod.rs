//! Monte-Carlo bond percolation on a contracted circuit lattice.
//!
//! Every percolation edge `e` of sample `index` draws one uniform variate
//! `u(seed, index, e)` from a ChaCha8 stream (stream id = sample index, word
//! position = `2 e`). The edge is open iff `u < p`. Realizations are therefore
//! reproducible per `(seed, index)`, can be evaluated lazily edge by edge, and
//! are coupled across `p`.

mod critical;
mod fit;
mod union_find;

pub use critical::{
    chain_family, crossing_lattice, estimate_pc, p_grid, spanning_thresholds, Crossing,
    CrossingLattice, PcEstimate, SpanningCurve,
};
pub use fit::{fit_correlation_length, fit_decay, DecayFit, DecayPoint, MIN_FIT_HITS};
pub use union_find::UnionFind;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{PercolationLattice, FIXED_EDGE};

/// Samples handled by one parallel task.
const CHUNK: u64 = 2048;

pub(crate) fn check_probability(what: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::out_of_range(what, p, "[0, 1]"))
    }
}

#[inline]
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent sub-seed for `tag`, derived from `master`.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(tag.wrapping_add(0x5eed_0000_0000_0000));
    rng.next_u64()
}

/// Uniform variates of one sample, addressable by edge id.
pub struct EdgeUniforms {
    rng: ChaCha8Rng,
}

impl EdgeUniforms {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        EdgeUniforms { rng }
    }

    /// Uniform variate of edge `e` (random access).
    pub fn at(&mut self, e: usize) -> f64 {
        self.rng.set_word_pos(2 * e as u128);
        unit_f64(self.rng.next_u64())
    }

    /// Uniform variates of edges `0..count` in order.
    pub fn fill(&mut self, count: usize) -> Vec<f64> {
        self.rng.set_word_pos(0);
        (0..count).map(|_| unit_f64(self.rng.next_u64())).collect()
    }
}

/// Open/closed state of every percolation edge for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub p: f64,
    pub seed: u64,
    pub index: u64,
    open: Vec<bool>,
}

impl NoiseRealization {
    /// Build a realization from explicit edge states.
    pub fn from_bits(p: f64, seed: u64, index: u64, open: Vec<bool>) -> Self {
        NoiseRealization {
            p,
            seed,
            index,
            open,
        }
    }

    pub fn is_open(&self, e: usize) -> bool {
        self.open[e]
    }

    pub fn bits(&self) -> &[bool] {
        &self.open
    }

    pub fn edge_count(&self) -> usize {
        self.open.len()
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&b| b).count()
    }
}

pub fn sample_realization(
    lattice: &PercolationLattice,
    p: f64,
    master_seed: u64,
    index: u64,
) -> Result<NoiseRealization> {
    check_probability("p", p)?;
    Ok(sample_edges(lattice.edge_count(), p, master_seed, index))
}

/// Realization over `count` edges, independent of any lattice.
pub fn sample_edges(count: usize, p: f64, master_seed: u64, index: u64) -> NoiseRealization {
    let open = EdgeUniforms::new(master_seed, index)
        .fill(count)
        .into_iter()
        .map(|u| u < p)
        .collect();
    NoiseRealization::from_bits(p, master_seed, index, open)
}

/// Partition of lattice nodes into open clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Canonical label per element: the smallest member of its class.
    labels: Vec<usize>,
    components: usize,
}

impl ClusterPartition {
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let components = labels.iter().enumerate().filter(|&(i, &l)| i == l).count();
        ClusterPartition { labels, components }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// Class sizes keyed by class label.
    pub fn class_sizes(&self) -> BTreeMap<usize, usize> {
        let mut sizes = BTreeMap::new();
        for &l in &self.labels {
            *sizes.entry(l).or_insert(0) += 1;
        }
        sizes
    }
}

fn check_realization(lattice: &PercolationLattice, r: &NoiseRealization) -> Result<()> {
    if r.edge_count() != lattice.edge_count() {
        return Err(Error::Shape(format!(
            "realization has {} edges, lattice has {}",
            r.edge_count(),
            lattice.edge_count()
        )));
    }
    Ok(())
}

/// Union every always-open and every open edge of `r` into `uf`.
fn union_open(lattice: &PercolationLattice, r: &NoiseRealization, uf: &mut UnionFind) {
    for &(a, b) in lattice.fixed_edges() {
        uf.union(a as usize, b as usize);
    }
    for (e, &(a, b)) in lattice.edge_ends().iter().enumerate() {
        if r.is_open(e) {
            uf.union(a as usize, b as usize);
        }
    }
}

pub fn connected_components(
    lattice: &PercolationLattice,
    r: &NoiseRealization,
) -> Result<ClusterPartition> {
    check_realization(lattice, r)?;
    let mut uf = UnionFind::new(lattice.node_count());
    union_open(lattice, r, &mut uf);
    Ok(ClusterPartition::from_labels(uf.labels()))
}

/// Histogram and summary of cluster sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// size -> number of clusters of that size
    pub histogram: BTreeMap<usize, usize>,
    pub components: usize,
    pub mean: f64,
    pub max: usize,
}

pub fn cluster_size_stats(partition: &ClusterPartition) -> ClusterStats {
    let mut histogram = BTreeMap::new();
    for (_, size) in partition.class_sizes() {
        *histogram.entry(size).or_insert(0) += 1;
    }
    let components = partition.components();
    ClusterStats {
        max: histogram.keys().next_back().copied().unwrap_or(0),
        mean: if components == 0 {
            0.0
        } else {
            partition.len() as f64 / components as f64
        },
        histogram,
        components,
    }
}

/// Monte-Carlo estimate of the connection probability of one node pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub source: usize,
    pub target: usize,
    pub distance: usize,
    pub samples: u64,
    pub hits: u64,
    pub tau: f64,
    pub stderr: f64,
}

impl TauEstimate {
    pub fn from_counts(
        source: usize,
        target: usize,
        distance: usize,
        samples: u64,
        hits: u64,
    ) -> Self {
        let tau = if samples == 0 {
            0.0
        } else {
            hits as f64 / samples as f64
        };
        let stderr = if samples == 0 {
            0.0
        } else {
            (tau * (1.0 - tau) / samples as f64).sqrt()
        };
        TauEstimate {
            source,
            target,
            distance,
            samples,
            hits,
            tau,
            stderr,
        }
    }
}

/// Per-sample scratch for lazy cluster exploration.
struct Explorer {
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<u32>,
}

impl Explorer {
    fn new(nodes: usize) -> Self {
        Explorer {
            stamp: vec![0; nodes],
            epoch: 0,
            stack: Vec::new(),
        }
    }

    /// Mark the open cluster of `source`, sampling edges on demand.
    fn explore(
        &mut self,
        lattice: &PercolationLattice,
        uniforms: &mut EdgeUniforms,
        p: f64,
        source: usize,
    ) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = u32::MAX);
            self.epoch = 1;
        }
        self.stamp[source] = self.epoch;
        self.stack.clear();
        self.stack.push(source as u32);
        while let Some(v) = self.stack.pop() {
            for &(w, e) in lattice.neighbors(v as usize) {
                if self.stamp[w as usize] == self.epoch {
                    continue;
                }
                if e == FIXED_EDGE || uniforms.at(e as usize) < p {
                    self.stamp[w as usize] = self.epoch;
                    self.stack.push(w);
                }
            }
        }
    }

    fn reached(&self, node: usize) -> bool {
        self.stamp[node] == self.epoch
    }
}

/// Estimate `tau(a, b; p)` for each pair over `samples` realizations.
///
/// Clusters are explored lazily from each distinct source node, so the cost
/// per sample scales with the source clusters rather than the lattice.
pub fn tau_estimate(
    lattice: &PercolationLattice,
    p: f64,
    pairs: &[(usize, usize)],
    samples: u64,
    seed: u64,
) -> Result<Vec<TauEstimate>> {
    check_probability("p", p)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    if let Some(&(a, b)) = pairs
        .iter()
        .find(|&&(a, b)| a >= lattice.node_count() || b >= lattice.node_count())
    {
        return Err(Error::InvalidParameter(format!(
            "pair ({a}, {b}) outside lattice"
        )));
    }
    // Group pair indices by source.
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &(a, _)) in pairs.iter().enumerate() {
        by_source.entry(a).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_source.into_iter().collect();

    let chunks = samples.div_ceil(CHUNK);
    let hits = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut explorer = Explorer::new(lattice.node_count());
            let mut counts = vec![0u64; pairs.len()];
            for index in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut uniforms = EdgeUniforms::new(seed, index);
                for (source, members) in &groups {
                    explorer.explore(lattice, &mut uniforms, p, *source);
                    for &i in members {
                        if explorer.reached(pairs[i].1) {
                            counts[i] += 1;
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; pairs.len()],
            |mut acc, part| {
                acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
                acc
            },
        );

    let mut distance_cache: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    Ok(pairs
        .iter()
        .zip(hits)
        .map(|(&(a, b), h)| {
            let dist = distance_cache
                .entry(a)
                .or_insert_with(|| lattice.distances_from(a))[b];
            TauEstimate::from_counts(a, b, dist, samples, h)
        })
        .collect())
}

/// Sum hits and samples of estimates sharing a distance.
pub fn pool_by_distance(estimates: &[TauEstimate]) -> Vec<TauEstimate> {
    let mut pooled: BTreeMap<usize, (usize, usize, u64, u64)> = BTreeMap::new();
    for e in estimates {
        let entry = pooled
            .entry(e.distance)
            .or_insert((e.source, e.target, 0, 0));
        entry.2 += e.samples;
        entry.3 += e.hits;
    }
    pooled
        .into_iter()
        .map(|(d, (a, b, s, h))| TauEstimate::from_counts(a, b, d, s, h))
        .collect()
}

/// Which top-layer node pairs to measure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSelection {
    /// Every pair of distinct top-layer nodes.
    All,
    /// From the top-layer node holding this particle to every other one.
    From(usize),
    /// Explicit particle pairs, mapped to their top-layer nodes.
    Particles(Vec<(usize, usize)>),
}

impl std::str::FromStr for PairSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(PairSelection::All);
        }
        if let Some(rest) = s.strip_prefix("from:") {
            return rest
                .parse()
                .map(PairSelection::From)
                .map_err(|_| Error::InvalidParameter(format!("bad pair source '{rest}'")));
        }
        s.split(',')
            .map(|item| {
                let (a, b) = item
                    .split_once('-')
                    .ok_or_else(|| Error::InvalidParameter(format!("bad pair '{item}'")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidParameter(format!("bad particle '{v}'")))
                };
                Ok((parse(a)?, parse(b)?))
            })
            .collect::<Result<Vec<_>>>()
            .map(PairSelection::Particles)
    }
}

impl std::fmt::Display for PairSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairSelection::All => write!(f, "all"),
            PairSelection::From(x) => write!(f, "from:{x}"),
            PairSelection::Particles(pairs) => {
                let items: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                write!(f, "{}", items.join(","))
            }
        }
    }
}

/// Resolve a selection to node pairs on the top layer of a space-time lattice.
pub fn top_layer_pairs(
    lattice: &PercolationLattice,
    selection: &PairSelection,
) -> Result<Vec<(usize, usize)>> {
    let spec = lattice
        .spec()
        .ok_or_else(|| Error::InvalidParameter("lattice has no space-time structure".into()))?;
    let top = spec.steps();
    let n = spec.particles();
    let check = |x: usize| {
        if x < n {
            Ok(())
        } else {
            Err(Error::out_of_range("particle", x, format!("0..{n}")))
        }
    };
    let nodes: Vec<usize> = lattice.layer_nodes(top).collect();
    Ok(match selection {
        PairSelection::All => nodes
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| nodes[i + 1..].iter().map(move |&b| (a, b)))
            .collect(),
        PairSelection::From(x) => {
            check(*x)?;
            let src = lattice.node_of(*x, top);
            nodes
                .iter()
                .filter(|&&b| b != src)
                .map(|&b| (src, b))
                .collect()
        }
        PairSelection::Particles(pairs) => pairs
            .iter()
            .map(|&(a, b)| {
                check(a)?;
                check(b)?;
                Ok((lattice.node_of(a, top), lattice.node_of(b, top)))
            })
            .collect::<Result<Vec<_>>>()?,
    })
}

/// Survival probability to `depth` generations of a branching process with
/// Binomial(3, p) offspring, the tree that dominates cluster growth on a
/// degree-4 lattice.
pub fn branching_upper_tree(p: f64, depth: usize) -> Result<f64> {
    check_probability("p", p)?;
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be >= 1".into()));
    }
    let mut survival = 1.0f64;
    for _ in 0..depth {
        survival = 1.0 - (1.0 - p * survival).powi(3);
    }
    Ok(survival)
}

/// Render tau estimates as CSV (`pair_id,distance,samples,hits,tau,stderr`).
pub fn tau_csv(estimates: &[TauEstimate]) -> String {
    let mut out = String::from("pair_id,distance,samples,hits,tau,stderr\n");
    for (i, e) in estimates.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{:.12e},{:.12e}\n",
            e.distance, e.samples, e.hits, e.tau, e.stderr
        ));
    }
    out
}

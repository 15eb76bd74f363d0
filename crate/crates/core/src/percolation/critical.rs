//! Critical-point estimation from spanning-probability curve crossings.
//!
//! For each sample we record the spanning threshold: the smallest `u*` such
//! that the edges with `u <= u*` connect the two boundaries. A realization at
//! probability `p` spans iff `u* < p`, so one pass per sample yields the whole
//! coupled curve `R_L(p)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_probability, derive_seed, EdgeUniforms, UnionFind, CHUNK};
use crate::error::{Error, Result};
use crate::lattice::{percolation_lattice, LatticeSpec, PercolationLattice};

/// A lattice with two opposite boundaries to be crossed.
#[derive(Debug, Clone)]
pub struct CrossingLattice {
    pub size: usize,
    pub lattice: PercolationLattice,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// `L^d x L` space-time box crossed along spatial axis 0.
pub fn crossing_lattice(dim: usize, size: usize) -> Result<CrossingLattice> {
    let spec = LatticeSpec::new(vec![size; dim], size)?;
    let lattice = percolation_lattice(&spec)?;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for node in 0..lattice.node_count() {
        let mut on_left = false;
        let mut on_right = false;
        for x in lattice.node_particles(node) {
            let c = spec.coord(x, 0);
            on_left |= c == 0;
            on_right |= c == size - 1;
        }
        if on_left {
            left.push(node);
        }
        if on_right {
            right.push(node);
        }
    }
    Ok(CrossingLattice {
        size,
        lattice,
        left,
        right,
    })
}

/// A path of `length` edges; it spans only when every edge is open.
pub fn chain_family(length: usize) -> Result<CrossingLattice> {
    let edges: Vec<(usize, usize)> = (0..length).map(|i| (i, i + 1)).collect();
    Ok(CrossingLattice {
        size: length,
        lattice: PercolationLattice::from_edges(length + 1, &edges)?,
        left: vec![0],
        right: vec![length],
    })
}

/// Spanning threshold of every sample (`-1` if the boundaries touch through
/// fixed edges, `2` if they never connect).
pub fn spanning_thresholds(c: &CrossingLattice, samples: u64, seed: u64) -> Vec<f64> {
    let lat = &c.lattice;
    let nodes = lat.node_count();
    let (left, right) = (nodes, nodes + 1);
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut uf = UnionFind::new(nodes + 2);
            let mut order: Vec<(f64, u32)> = Vec::with_capacity(lat.edge_count());
            let mut out = Vec::new();
            for index in chunk * CHUNK..((chunk + 1) * CHUNK).min(samples) {
                uf.reset();
                for &v in &c.left {
                    uf.union(v, left);
                }
                for &v in &c.right {
                    uf.union(v, right);
                }
                for &(a, b) in lat.fixed_edges() {
                    uf.union(a as usize, b as usize);
                }
                if uf.connected(left, right) {
                    out.push(-1.0);
                    continue;
                }
                let u = EdgeUniforms::new(seed, index).fill(lat.edge_count());
                order.clear();
                order.extend(u.into_iter().enumerate().map(|(e, u)| (u, e as u32)));
                order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                let mut threshold = 2.0;
                for &(u, e) in &order {
                    let (a, b) = lat.edge_ends()[e as usize];
                    if uf.union(a as usize, b as usize) && uf.connected(left, right) {
                        threshold = u;
                        break;
                    }
                }
                out.push(threshold);
            }
            out
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Evenly spaced grid `p_min, p_min + step, ..., p_max`.
pub fn p_grid(p_min: f64, p_max: f64, p_step: f64) -> Result<Vec<f64>> {
    check_probability("p-min", p_min)?;
    check_probability("p-max", p_max)?;
    if !(p_step > 0.0) || p_max < p_min {
        return Err(Error::InvalidParameter(format!(
            "grid needs p-min <= p-max and p-step > 0 (got {p_min}, {p_max}, {p_step})"
        )));
    }
    let count = ((p_max - p_min) / p_step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((p_min + i as f64 * p_step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningCurve {
    pub size: usize,
    pub samples: u64,
    pub p: Vec<f64>,
    pub probability: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub sizes: (usize, usize),
    pub p: f64,
    /// Statistical error of the crossing location.
    pub stat_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub pc: f64,
    /// Half the grid step plus the largest statistical error plus half the
    /// spread of the pairwise crossings.
    pub uncertainty: f64,
    pub grid_step: f64,
    pub crossings: Vec<Crossing>,
    pub curves: Vec<SpanningCurve>,
}

fn curve(c: &CrossingLattice, grid: &[f64], samples: u64, seed: u64) -> SpanningCurve {
    let mut thresholds = spanning_thresholds(c, samples, seed);
    thresholds.sort_unstable_by(f64::total_cmp);
    let n = samples as f64;
    let probability: Vec<f64> = grid
        .iter()
        .map(|&p| thresholds.partition_point(|&u| u < p) as f64 / n)
        .collect();
    let stderr = probability
        .iter()
        .map(|&r| (r * (1.0 - r) / n).sqrt())
        .collect();
    SpanningCurve {
        size: c.size,
        samples,
        p: grid.to_vec(),
        probability,
        stderr,
    }
}

fn crossing(small: &SpanningCurve, large: &SpanningCurve) -> Option<Crossing> {
    let diff: Vec<f64> = small
        .probability
        .iter()
        .zip(&large.probability)
        .map(|(a, b)| a - b)
        .collect();
    let best = (0..diff.len().saturating_sub(1))
        .filter(|&i| diff[i] > 0.0 && diff[i + 1] <= 0.0)
        .max_by(|&i, &j| (diff[i] - diff[i + 1]).total_cmp(&(diff[j] - diff[j + 1])))?;
    let (p0, p1) = (small.p[best], small.p[best + 1]);
    let drop = diff[best] - diff[best + 1];
    let p = p0 + (p1 - p0) * diff[best] / drop;
    let var = |i: usize| small.stderr[i].powi(2) + large.stderr[i].powi(2);
    let sigma_diff = var(best).max(var(best + 1)).sqrt();
    let slope = drop / (p1 - p0);
    Some(Crossing {
        sizes: (small.size, large.size),
        p,
        stat_error: sigma_diff / slope,
    })
}

/// Locate the critical probability as the crossing of spanning curves of
/// consecutive sizes.
pub fn estimate_pc(
    family: &[CrossingLattice],
    grid: &[f64],
    samples: u64,
    seed: u64,
) -> Result<PcEstimate> {
    if family.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two lattice sizes".into(),
        ));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two grid points".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let curves: Vec<SpanningCurve> = family
        .iter()
        .enumerate()
        .map(|(k, c)| curve(c, grid, samples, derive_seed(seed, k as u64)))
        .collect();
    let mut crossings = Vec::new();
    for pair in curves.windows(2) {
        match crossing(&pair[0], &pair[1]) {
            Some(c) => crossings.push(c),
            None => {
                let show = |c: &SpanningCurve| {
                    c.probability
                        .iter()
                        .map(|r| format!("{r:.3}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                return Err(Error::Bracket(format!(
                    "curves for sizes {} and {} do not cross on [{}, {}]; R_{}: {}; R_{}: {}",
                    pair[0].size,
                    pair[1].size,
                    grid[0],
                    grid[grid.len() - 1],
                    pair[0].size,
                    show(&pair[0]),
                    pair[1].size,
                    show(&pair[1]),
                )));
            }
        }
    }
    let grid_step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let pc = crossings.iter().map(|c| c.p).sum::<f64>() / crossings.len() as f64;
    let lo = crossings.iter().map(|c| c.p).fold(f64::INFINITY, f64::min);
    let hi = crossings
        .iter()
        .map(|c| c.p)
        .fold(f64::NEG_INFINITY, f64::max);
    let stat = crossings.iter().map(|c| c.stat_error).fold(0.0, f64::max);
    Ok(PcEstimate {
        pc,
        uncertainty: grid_step / 2.0 + stat + (hi - lo) / 2.0,
        grid_step,
        crossings,
        curves,
    })
}

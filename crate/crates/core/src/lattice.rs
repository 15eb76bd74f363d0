//! Space-time interaction graph of a nearest-neighbor circuit and its
//! contraction to a bond-percolation lattice.
//!
//! Particles sit on an open `d`-dimensional box. At step `t` (1-based) every
//! particle interacts with at most one neighbor along axis `(t - 1) mod d`;
//! consecutive visits to the same axis alternate the pairing offset between
//! even and odd coordinates. Space-time vertex `(x, t)` has the dense id
//! `t * n + x`, and the vertical edge `(x, t) -> (x, t + 1)` has the dense id
//! `t * n + x` as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of space-time vertices.
pub const DEFAULT_MAX_VERTICES: usize = 1 << 28;

/// Marker for "no particle" in a node's member slot.
pub const NO_PARTICLE: u32 = u32::MAX;

/// Marker used in adjacency lists for edges that are always open.
pub const FIXED_EDGE: u32 = u32::MAX;

/// Geometry of the circuit: box sides (one per spatial axis) and number of
/// interaction steps. Boundaries are open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    sides: Vec<usize>,
    steps: usize,
}

impl LatticeSpec {
    pub fn new(sides: Vec<usize>, steps: usize) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidParameter(
                "lattice needs at least one spatial axis".into(),
            ));
        }
        if let Some(&s) = sides.iter().find(|&&s| s < 2) {
            return Err(Error::out_of_range("side", s, ">= 2"));
        }
        let n = sides
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| Error::Capacity("particle count overflows".into()))?;
        if n > u32::MAX as usize / 2 {
            return Err(Error::Capacity(format!("{n} particles")));
        }
        Ok(LatticeSpec { sides, steps })
    }

    /// A one-dimensional chain of `n` particles.
    pub fn chain(n: usize, steps: usize) -> Result<Self> {
        Self::new(vec![n], steps)
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Total number of particles.
    pub fn particles(&self) -> usize {
        self.sides.iter().product()
    }

    /// Index stride of `axis` (row-major, last axis fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.sides[axis + 1..].iter().product()
    }

    pub fn coords(&self, particle: usize) -> Vec<usize> {
        let mut rest = particle;
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = rest % self.sides[axis];
            rest /= self.sides[axis];
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.sides)
            .fold(0, |acc, (&c, &s)| acc * s + c)
    }

    /// Coordinate of `particle` along `axis`.
    pub fn coord(&self, particle: usize, axis: usize) -> usize {
        (particle / self.stride(axis)) % self.sides[axis]
    }

    /// Manhattan distance between two particles.
    pub fn particle_distance(&self, a: usize, b: usize) -> usize {
        (0..self.dim())
            .map(|axis| self.coord(a, axis).abs_diff(self.coord(b, axis)))
            .sum()
    }

    /// Same geometry with a different number of steps.
    pub fn with_steps(&self, steps: usize) -> Self {
        LatticeSpec {
            sides: self.sides.clone(),
            steps,
        }
    }
}

/// Axis and pairing offset used at step `t >= 1`.
fn axis_and_offset(dim: usize, t: usize) -> (usize, usize) {
    let axis = (t - 1) % dim;
    let visit = (t - 1) / dim;
    (axis, visit % 2)
}

/// Scheduled interaction pairs `(x, y)` with `x < y` at step `t` in `1..=T`.
pub fn interaction_schedule(spec: &LatticeSpec, t: usize) -> Result<Vec<(usize, usize)>> {
    if t == 0 || t > spec.steps() {
        return Err(Error::out_of_range(
            "time step",
            t,
            format!("1..={}", spec.steps()),
        ));
    }
    Ok(pairs_at(spec, t))
}

/// Schedule without the range check; valid for any `t >= 1`.
pub(crate) fn pairs_at(spec: &LatticeSpec, t: usize) -> Vec<(usize, usize)> {
    let (axis, offset) = axis_and_offset(spec.dim(), t);
    let stride = spec.stride(axis);
    let side = spec.sides()[axis];
    (0..spec.particles())
        .filter_map(|x| {
            let c = (x / stride) % side;
            (c >= offset && (c - offset).is_multiple_of(2) && c + 1 < side)
                .then_some((x, x + stride))
        })
        .collect()
}

/// Kind of a space-time edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Vertical,
    Interaction,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Vertical => "vertical",
            EdgeKind::Interaction => "interaction",
        }
    }
}

/// One space-time edge `((x1, t1), (x2, t2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpacetimeEdge {
    pub kind: EdgeKind,
    pub x1: usize,
    pub t1: usize,
    pub x2: usize,
    pub t2: usize,
}

/// The (d+1)-dimensional graph of particle world lines and interactions.
#[derive(Debug, Clone)]
pub struct SpacetimeGraph {
    spec: LatticeSpec,
    /// `interactions[t]` holds the pairs of step `t`; index 0 is empty.
    interactions: Vec<Vec<(usize, usize)>>,
}

pub fn build_spacetime_graph(spec: &LatticeSpec) -> Result<SpacetimeGraph> {
    build_spacetime_graph_capped(spec, DEFAULT_MAX_VERTICES)
}

pub fn build_spacetime_graph_capped(
    spec: &LatticeSpec,
    max_vertices: usize,
) -> Result<SpacetimeGraph> {
    let vertices = spec
        .particles()
        .checked_mul(spec.steps() + 1)
        .filter(|&v| v <= max_vertices)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "{} particles x {} layers exceeds {max_vertices} vertices",
                spec.particles(),
                spec.steps() + 1
            ))
        })?;
    debug_assert!(vertices <= max_vertices);
    let mut interactions = Vec::with_capacity(spec.steps() + 1);
    interactions.push(Vec::new());
    for t in 1..=spec.steps() {
        interactions.push(pairs_at(spec, t));
    }
    Ok(SpacetimeGraph {
        spec: spec.clone(),
        interactions,
    })
}

impl SpacetimeGraph {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn vertex_count(&self) -> usize {
        self.spec.particles() * (self.spec.steps() + 1)
    }

    pub fn vertex_id(&self, particle: usize, t: usize) -> usize {
        t * self.spec.particles() + particle
    }

    pub fn vertical_edge_count(&self) -> usize {
        self.spec.particles() * self.spec.steps()
    }

    pub fn interaction_edge_count(&self) -> usize {
        self.interactions.iter().map(Vec::len).sum()
    }

    /// Interaction pairs at step `t` (empty for `t == 0`).
    pub fn interactions(&self, t: usize) -> &[(usize, usize)] {
        &self.interactions[t]
    }

    /// Endpoints of vertical edge `e` as `(particle, lower layer)`.
    pub fn vertical_edge(&self, e: usize) -> (usize, usize) {
        let n = self.spec.particles();
        (e % n, e / n)
    }

    /// All edges, vertical edges of each layer first, then that layer's
    /// interactions, in layer order.
    pub fn edges(&self) -> impl Iterator<Item = SpacetimeEdge> + '_ {
        let n = self.spec.particles();
        (0..=self.spec.steps()).flat_map(move |t| {
            let interactions = self.interactions[t]
                .iter()
                .map(move |&(x, y)| SpacetimeEdge {
                    kind: EdgeKind::Interaction,
                    x1: x,
                    t1: t,
                    x2: y,
                    t2: t,
                });
            let verticals = (0..n).filter(move |_| t > 0).map(move |x| SpacetimeEdge {
                kind: EdgeKind::Vertical,
                x1: x,
                t1: t - 1,
                x2: x,
                t2: t,
            });
            verticals.chain(interactions)
        })
    }

    /// Edge list as CSV with columns `kind,x1,t1,x2,t2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,x1,t1,x2,t2\n");
        for e in self.edges() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.kind.as_str(),
                e.x1,
                e.t1,
                e.x2,
                e.t2
            ));
        }
        out
    }
}

/// Bond-percolation lattice: contracted space-time nodes joined by the former
/// vertical edges (percolation edges) plus optional always-open edges.
#[derive(Debug, Clone)]
pub struct PercolationLattice {
    spec: Option<LatticeSpec>,
    node_count: usize,
    /// Endpoints of each percolation edge; index = edge id.
    edge_ends: Vec<(u32, u32)>,
    /// Edges that are open in every realization.
    fixed_edges: Vec<(u32, u32)>,
    /// CSR adjacency: `(neighbor, edge id or FIXED_EDGE)`.
    adj_start: Vec<u32>,
    adj: Vec<(u32, u32)>,
    node_layer: Vec<u32>,
    node_members: Vec<[u32; 2]>,
    /// `vertex_node[t * n + x]` = contracted node of `(x, t)`.
    vertex_node: Vec<u32>,
    layer_start: Vec<u32>,
}

/// Contract every interaction edge of `g` to a point.
pub fn contract_interactions(g: &SpacetimeGraph) -> PercolationLattice {
    let spec = g.spec();
    let n = spec.particles();
    let steps = spec.steps();
    let mut vertex_node = vec![0u32; g.vertex_count()];
    let mut node_layer = Vec::new();
    let mut node_members = Vec::new();
    let mut layer_start = Vec::with_capacity(steps + 2);
    for t in 0..=steps {
        layer_start.push(node_layer.len() as u32);
        let mut partner = vec![usize::MAX; n];
        for &(x, y) in g.interactions(t) {
            partner[x] = y;
            partner[y] = x;
        }
        for x in 0..n {
            let p = partner[x];
            if p != usize::MAX && p < x {
                vertex_node[t * n + x] = vertex_node[t * n + p];
                continue;
            }
            let id = node_layer.len() as u32;
            vertex_node[t * n + x] = id;
            node_layer.push(t as u32);
            let second = if p == usize::MAX {
                NO_PARTICLE
            } else {
                p as u32
            };
            node_members.push([x as u32, second]);
        }
    }
    layer_start.push(node_layer.len() as u32);

    let edge_ends = (0..n * steps)
        .map(|e| {
            let (x, t) = (e % n, e / n);
            (vertex_node[t * n + x], vertex_node[(t + 1) * n + x])
        })
        .collect();
    let mut lattice = PercolationLattice {
        spec: Some(spec.clone()),
        node_count: node_layer.len(),
        edge_ends,
        fixed_edges: Vec::new(),
        adj_start: Vec::new(),
        adj: Vec::new(),
        node_layer,
        node_members,
        vertex_node,
        layer_start,
    };
    lattice.rebuild_adjacency();
    lattice
}

/// Build the space-time graph of `spec` and contract it.
pub fn percolation_lattice(spec: &LatticeSpec) -> Result<PercolationLattice> {
    Ok(contract_interactions(&build_spacetime_graph(spec)?))
}

impl PercolationLattice {
    /// A lattice given directly by its edge list, without space-time
    /// metadata. All nodes are placed in layer 0.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count > u32::MAX as usize - 1 {
            return Err(Error::Capacity(format!("{node_count} nodes")));
        }
        if let Some(&(a, b)) = edges
            .iter()
            .find(|&&(a, b)| a >= node_count || b >= node_count)
        {
            return Err(Error::InvalidParameter(format!(
                "edge ({a}, {b}) references a node >= {node_count}"
            )));
        }
        let mut lattice = PercolationLattice {
            spec: None,
            node_count,
            edge_ends: edges.iter().map(|&(a, b)| (a as u32, b as u32)).collect(),
            fixed_edges: Vec::new(),
            adj_start: Vec::new(),
            adj: Vec::new(),
            node_layer: vec![0; node_count],
            node_members: vec![[NO_PARTICLE; 2]; node_count],
            vertex_node: Vec::new(),
            layer_start: vec![0, node_count as u32],
        };
        lattice.rebuild_adjacency();
        Ok(lattice)
    }

    fn rebuild_adjacency(&mut self) {
        let mut degree = vec![0u32; self.node_count + 1];
        let all = self
            .edge_ends
            .iter()
            .enumerate()
            .map(|(e, &ends)| (ends, e as u32))
            .chain(self.fixed_edges.iter().map(|&ends| (ends, FIXED_EDGE)));
        for ((a, b), _) in all.clone() {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut start = vec![0u32; self.node_count + 1];
        for v in 0..self.node_count {
            start[v + 1] = start[v] + degree[v];
        }
        let mut fill = start.clone();
        let mut adj = vec![(0u32, 0u32); start[self.node_count] as usize];
        for ((a, b), e) in all {
            adj[fill[a as usize] as usize] = (b, e);
            fill[a as usize] += 1;
            adj[fill[b as usize] as usize] = (a, e);
            fill[b as usize] += 1;
        }
        self.adj_start = start;
        self.adj = adj;
    }

    pub fn spec(&self) -> Option<&LatticeSpec> {
        self.spec.as_ref()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of percolation (random) edges.
    pub fn edge_count(&self) -> usize {
        self.edge_ends.len()
    }

    pub fn edge_ends(&self) -> &[(u32, u32)] {
        &self.edge_ends
    }

    pub fn fixed_edges(&self) -> &[(u32, u32)] {
        &self.fixed_edges
    }

    /// Neighbors of `node` with the connecting edge id ([`FIXED_EDGE`] for
    /// always-open edges).
    pub fn neighbors(&self, node: usize) -> &[(u32, u32)] {
        let s = self.adj_start[node] as usize;
        let e = self.adj_start[node + 1] as usize;
        &self.adj[s..e]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors(node).len()
    }

    pub fn node_layer(&self, node: usize) -> usize {
        self.node_layer[node] as usize
    }

    /// Particles contracted into `node` (one or two).
    pub fn node_particles(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.node_members[node]
            .iter()
            .filter(|&&p| p != NO_PARTICLE)
            .map(|&p| p as usize)
    }

    /// Contracted node of space-time point `(particle, t)`.
    pub fn node_of(&self, particle: usize, t: usize) -> usize {
        let n = self.spec.as_ref().map_or(0, LatticeSpec::particles);
        self.vertex_node[t * n + particle] as usize
    }

    /// Node ids of layer `t` (a contiguous range).
    pub fn layer_nodes(&self, t: usize) -> std::ops::Range<usize> {
        self.layer_start[t] as usize..self.layer_start[t + 1] as usize
    }

    pub fn layers(&self) -> usize {
        self.layer_start.len() - 1
    }

    /// Breadth-first graph distances from `source` over all edges, with
    /// `usize::MAX` for unreachable nodes.
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in self.neighbors(v) {
                let w = w as usize;
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn graph_distance(&self, a: usize, b: usize) -> Option<usize> {
        let d = self.distances_from(a)[b];
        (d != usize::MAX).then_some(d)
    }
}

/// Add an always-open chain through all layer-0 nodes, turning the initial
/// layer into a single component.
pub fn giant_initial_augmentation(lattice: &PercolationLattice) -> PercolationLattice {
    let mut out = lattice.clone();
    let layer0 = lattice.layer_nodes(0);
    out.fixed_edges.extend(
        layer0
            .clone()
            .zip(layer0.skip(1))
            .map(|(a, b)| (a as u32, b as u32)),
    );
    out.rebuild_adjacency();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn chain_schedule_alternates() {
        let spec = LatticeSpec::chain(4, 2).unwrap();
        assert_eq!(
            interaction_schedule(&spec, 1).unwrap(),
            vec![(0, 1), (2, 3)]
        );
        assert_eq!(interaction_schedule(&spec, 2).unwrap(), vec![(1, 2)]);
        assert!(interaction_schedule(&spec, 0).is_err());
        assert!(interaction_schedule(&spec, 3).is_err());
    }

    #[test]
    fn square_schedule_uses_axis_zero_first() {
        let spec = LatticeSpec::new(vec![3, 3], 4).unwrap();
        let pairs = interaction_schedule(&spec, 1).unwrap();
        let mut seen = BTreeSet::new();
        for &(x, y) in &pairs {
            assert_eq!(spec.coord(x, 1), spec.coord(y, 1));
            assert_eq!(spec.coord(y, 0), spec.coord(x, 0) + 1);
            assert!(seen.insert(x) && seen.insert(y));
        }
        assert_eq!(pairs.len(), 3);
        // Step 2 pairs along axis 1, step 3 returns to axis 0 with odd offset.
        for &(x, y) in &interaction_schedule(&spec, 2).unwrap() {
            assert_eq!(spec.coord(x, 0), spec.coord(y, 0));
        }
        for &(x, _) in &interaction_schedule(&spec, 3).unwrap() {
            assert_eq!(spec.coord(x, 0), 1);
        }
    }

    #[test]
    fn schedule_is_a_matching_for_every_step() {
        for sides in [vec![7], vec![4, 5], vec![3, 2, 4]] {
            let spec = LatticeSpec::new(sides, 12).unwrap();
            for t in 1..=12 {
                let mut seen = BTreeSet::new();
                for (x, y) in interaction_schedule(&spec, t).unwrap() {
                    assert!(seen.insert(x) && seen.insert(y), "t={t}");
                    assert_eq!(spec.particle_distance(x, y), 1);
                }
            }
        }
    }

    #[test]
    fn graph_counts() {
        let g = build_spacetime_graph(&LatticeSpec::chain(4, 2).unwrap()).unwrap();
        assert_eq!(g.vertex_count(), 12);
        assert_eq!(g.vertical_edge_count(), 8);
        assert_eq!(g.interaction_edge_count(), 3);

        let g = build_spacetime_graph(&LatticeSpec::chain(2, 0).unwrap()).unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.vertical_edge_count(), 0);
        assert_eq!(g.interaction_edge_count(), 0);

        // Hand enumeration: 4 + 3 + 4 + 3 interactions over four steps.
        let g = build_spacetime_graph(&LatticeSpec::chain(8, 4).unwrap()).unwrap();
        assert_eq!(g.vertical_edge_count(), 32);
        assert_eq!(g.interaction_edge_count(), 14);
        assert_eq!(g.edges().count(), 32 + 14);
    }

    #[test]
    fn capacity_limit() {
        let spec = LatticeSpec::chain(10, 10).unwrap();
        assert!(matches!(
            build_spacetime_graph_capped(&spec, 100),
            Err(Error::Capacity(_))
        ));
        assert!(build_spacetime_graph_capped(&spec, 110).is_ok());
    }

    #[test]
    fn invalid_specs() {
        assert!(LatticeSpec::new(vec![], 3).is_err());
        assert!(LatticeSpec::new(vec![4, 1], 3).is_err());
    }

    #[test]
    fn contraction_counts_and_degree() {
        let lat = percolation_lattice(&LatticeSpec::chain(4, 2).unwrap()).unwrap();
        assert_eq!(lat.node_count(), 9);
        assert_eq!(lat.edge_count(), 8);

        let lat = percolation_lattice(&LatticeSpec::chain(12, 6).unwrap()).unwrap();
        // Interior node at layer 3 pairing particles 4 and 5.
        let node = lat.node_of(4, 3);
        assert_eq!(lat.node_of(5, 3), node);
        assert_eq!(lat.degree(node), 4);
        for v in 0..lat.node_count() {
            assert!(lat.degree(v) <= 4);
        }
        let lat = percolation_lattice(&LatticeSpec::new(vec![4, 4, 3], 7).unwrap()).unwrap();
        for v in 0..lat.node_count() {
            assert!(lat.degree(v) <= 4);
        }
    }

    #[test]
    fn rotated_square_structure() {
        // Each interior node connects up/down to the two neighboring pair nodes.
        let lat = percolation_lattice(&LatticeSpec::chain(8, 4).unwrap()).unwrap();
        let node = lat.node_of(2, 1);
        let mut up: Vec<usize> = lat
            .neighbors(node)
            .iter()
            .map(|&(w, _)| w as usize)
            .filter(|&w| lat.node_layer(w) == 2)
            .collect();
        up.sort();
        assert_eq!(up, vec![lat.node_of(1, 2), lat.node_of(3, 2)]);
        assert_eq!(
            lat.graph_distance(lat.node_of(0, 3), lat.node_of(4, 3)),
            Some(4)
        );
    }

    #[test]
    fn augmentation_links_layer_zero() {
        let lat = percolation_lattice(&LatticeSpec::chain(4, 2).unwrap()).unwrap();
        let aug = giant_initial_augmentation(&lat);
        assert_eq!(aug.fixed_edges().len(), 3);
        assert_eq!(aug.edge_count(), lat.edge_count());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = build_spacetime_graph(&LatticeSpec::chain(4, 1).unwrap()).unwrap();
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "kind,x1,t1,x2,t2");
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert!(lines.contains(&"interaction,0,1,1,1"));
        assert!(lines.contains(&"vertical,3,0,3,1"));
    }
}

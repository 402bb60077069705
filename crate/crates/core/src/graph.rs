//! Player graph with per-node strategies.
//!
//! The graph keeps the node/edge-type census in sync with every mutation and
//! maintains an index of the edges that can be picked by the event loop, so a
//! uniform draw is O(1) and a strategy flip costs O(degree).

use std::fmt;
use std::io::Write;

use indexmap::IndexSet;
use rand::Rng;
use rustc_hash::{FxBuildHasher, FxHashMap};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{max_edges, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeState {
    Cooperator,
    Defector,
}

impl NodeState {
    pub fn flipped(self) -> Self {
        match self {
            NodeState::Cooperator => NodeState::Defector,
            NodeState::Defector => NodeState::Cooperator,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            NodeState::Cooperator => 'C',
            NodeState::Defector => 'D',
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Type of an edge by the strategies of its two ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    CC,
    CD,
    DD,
}

impl EdgeKind {
    pub fn of(a: NodeState, b: NodeState) -> Self {
        use NodeState::*;
        match (a, b) {
            (Cooperator, Cooperator) => EdgeKind::CC,
            (Defector, Defector) => EdgeKind::DD,
            _ => EdgeKind::CD,
        }
    }

    pub fn is_eligible(self, variant: Variant) -> bool {
        match self {
            EdgeKind::CD => true,
            EdgeKind::DD => variant == Variant::CdAndDd,
            EdgeKind::CC => false,
        }
    }
}

/// Unordered node pair, stored with the smaller id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(usize, usize);

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        debug_assert_ne!(a, b, "self-loop");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn lo(self) -> usize {
        self.0
    }

    pub fn hi(self) -> usize {
        self.1
    }

    pub fn other(self, node: usize) -> usize {
        if node == self.0 {
            self.1
        } else {
            debug_assert_eq!(node, self.1);
            self.0
        }
    }
}

/// Node and edge-type counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub n_c: usize,
    pub n_cc: usize,
    pub n_cd: usize,
    pub n_dd: usize,
}

impl TypeCounts {
    fn edge_slot(&mut self, kind: EdgeKind) -> &mut usize {
        match kind {
            EdgeKind::CC => &mut self.n_cc,
            EdgeKind::CD => &mut self.n_cd,
            EdgeKind::DD => &mut self.n_dd,
        }
    }

    pub fn edges(&self) -> usize {
        self.n_cc + self.n_cd + self.n_dd
    }
}

/// Array + position map: O(1) insert, delete and uniform draw.
#[derive(Clone, Debug, Default)]
struct EdgeIndex {
    edges: Vec<Edge>,
    pos: FxHashMap<Edge, usize>,
}

impl EdgeIndex {
    fn insert(&mut self, e: Edge) {
        if self.pos.contains_key(&e) {
            return;
        }
        self.pos.insert(e, self.edges.len());
        self.edges.push(e);
    }

    fn remove(&mut self, e: Edge) {
        if let Some(i) = self.pos.remove(&e) {
            let last = self.edges.pop().expect("index non-empty");
            if i < self.edges.len() {
                self.edges[i] = last;
                self.pos.insert(last, i);
            }
        }
    }

    fn clear(&mut self) {
        self.edges.clear();
        self.pos.clear();
    }
}

type NeighborSet = IndexSet<usize, FxBuildHasher>;

#[derive(Clone, Debug)]
pub struct PlayerGraph {
    adjacency: Vec<NeighborSet>,
    state: Vec<NodeState>,
    counts: TypeCounts,
    variant: Variant,
    eligible: EdgeIndex,
}

impl PlayerGraph {
    /// Edgeless graph of `n` cooperators.
    pub fn new(n: usize, variant: Variant) -> Self {
        PlayerGraph {
            adjacency: vec![NeighborSet::default(); n],
            state: vec![NodeState::Cooperator; n],
            counts: TypeCounts {
                n_c: n,
                ..Default::default()
            },
            variant,
            eligible: EdgeIndex::default(),
        }
    }

    /// Builds a graph from explicit edges and states. Duplicate edges are
    /// ignored; self-loops and out-of-range endpoints are rejected.
    pub fn from_parts(
        states: &[NodeState],
        edges: &[(usize, usize)],
        variant: Variant,
    ) -> Result<Self> {
        let n = states.len();
        let mut g = PlayerGraph::new(n, variant);
        for (i, &s) in states.iter().enumerate() {
            g.set_state(i, s);
        }
        for &(a, b) in edges {
            for x in [a, b] {
                if x >= n {
                    return Err(Error::NodeOutOfRange { node: x, n });
                }
            }
            if a == b {
                return Err(Error::Parse(format!("self-loop at node {a}")));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    /// Erdős–Rényi G(n, m): `m` distinct pairs drawn uniformly without
    /// replacement. All nodes start as cooperators.
    pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        let max = max_edges(n);
        if m > max {
            return Err(Error::TooManyEdges { n, m, max });
        }
        let mut g = PlayerGraph::new(n, Variant::CdOnly);
        for k in rand::seq::index::sample(rng, max, m).into_iter() {
            let (a, b) = pair_from_index(k);
            g.add_edge(a, b);
        }
        Ok(g)
    }

    /// Sets exactly `round(rho * n)` uniformly chosen nodes to D and the rest to C.
    pub fn assign_states<R: Rng + ?Sized>(&mut self, rho: f64, rng: &mut R) {
        let n = self.n();
        let k = ((rho * n as f64).round() as usize).min(n);
        self.state.fill(NodeState::Cooperator);
        for i in rand::seq::index::sample(rng, n, k).into_iter() {
            self.state[i] = NodeState::Defector;
        }
        self.rebuild();
    }

    /// Switches the eligibility rule and rebuilds the index.
    pub fn set_variant(&mut self, variant: Variant) {
        if self.variant != variant {
            self.variant = variant;
            self.rebuild();
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    fn rebuild(&mut self) {
        self.counts = self.recount();
        self.eligible.clear();
        let eligible: Vec<Edge> = self
            .edges()
            .filter(|&e| self.edge_kind(e).is_eligible(self.variant))
            .collect();
        for e in eligible {
            self.eligible.insert(e);
        }
    }

    pub fn n(&self) -> usize {
        self.state.len()
    }

    pub fn m(&self) -> usize {
        self.counts.edges()
    }

    pub fn counts(&self) -> TypeCounts {
        self.counts
    }

    pub fn state(&self, node: usize) -> NodeState {
        self.state[node]
    }

    pub fn states(&self) -> &[NodeState] {
        &self.state
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node].iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn edge_kind(&self, e: Edge) -> EdgeKind {
        EdgeKind::of(self.state[e.lo()], self.state[e.hi()])
    }

    /// Every edge once, in a deterministic order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, nbrs)| {
            nbrs.iter()
                .copied()
                .filter(move |&b| a < b)
                .map(move |b| Edge(a, b))
        })
    }

    pub fn eligible_len(&self) -> usize {
        self.eligible.edges.len()
    }

    pub fn eligible_edges(&self) -> &[Edge] {
        &self.eligible.edges
    }

    pub fn is_eligible(&self, e: Edge) -> bool {
        self.eligible.pos.contains_key(&e)
    }

    /// Uniform draw from the eligible edges.
    pub fn sample_eligible<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Edge> {
        let edges = &self.eligible.edges;
        if edges.is_empty() {
            None
        } else {
            Some(edges[rng.gen_range(0..edges.len())])
        }
    }

    /// Adds an edge; returns `false` if it already existed.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        assert_ne!(a, b, "self-loop");
        if !self.adjacency[a].insert(b) {
            return false;
        }
        self.adjacency[b].insert(a);
        let e = Edge::new(a, b);
        let kind = self.edge_kind(e);
        *self.counts.edge_slot(kind) += 1;
        if kind.is_eligible(self.variant) {
            self.eligible.insert(e);
        }
        true
    }

    /// Removes an edge; returns `false` if it was absent.
    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        if !self.adjacency[a].swap_remove(&b) {
            return false;
        }
        self.adjacency[b].swap_remove(&a);
        let e = Edge::new(a, b);
        let kind = self.edge_kind(e);
        *self.counts.edge_slot(kind) -= 1;
        self.eligible.remove(e);
        true
    }

    /// Sets a node's strategy, updating the census and the eligibility of
    /// every incident edge.
    pub fn set_state(&mut self, node: usize, new: NodeState) {
        let old = self.state[node];
        if old == new {
            return;
        }
        match new {
            NodeState::Cooperator => self.counts.n_c += 1,
            NodeState::Defector => self.counts.n_c -= 1,
        }
        self.state[node] = new;
        for i in 0..self.adjacency[node].len() {
            let v = self.adjacency[node][i];
            let sv = self.state[v];
            let before = EdgeKind::of(old, sv);
            let after = EdgeKind::of(new, sv);
            *self.counts.edge_slot(before) -= 1;
            *self.counts.edge_slot(after) += 1;
            let e = Edge::new(node, v);
            match (
                before.is_eligible(self.variant),
                after.is_eligible(self.variant),
            ) {
                (false, true) => self.eligible.insert(e),
                (true, false) => self.eligible.remove(e),
                _ => {}
            }
        }
    }

    pub fn flip(&mut self, node: usize) {
        let s = self.state[node].flipped();
        self.set_state(node, s);
    }

    /// Total utility of `node` against all of its neighbours.
    ///
    /// Payoffs per pairing: C–C gives 1, C against D gives 0, D against C
    /// gives 1+u and D–D gives u.
    pub fn node_payoff(&self, u: f64, node: usize) -> f64 {
        let (mut c, mut d) = (0usize, 0usize);
        for &v in &self.adjacency[node] {
            match self.state[v] {
                NodeState::Cooperator => c += 1,
                NodeState::Defector => d += 1,
            }
        }
        match self.state[node] {
            NodeState::Cooperator => c as f64,
            NodeState::Defector => c as f64 * (1.0 + u) + d as f64 * u,
        }
    }

    /// Census computed from scratch.
    pub fn recount(&self) -> TypeCounts {
        let mut counts = TypeCounts {
            n_c: self
                .state
                .iter()
                .filter(|&&s| s == NodeState::Cooperator)
                .count(),
            ..Default::default()
        };
        for e in self.edges() {
            *counts.edge_slot(self.edge_kind(e)) += 1;
        }
        counts
    }

    /// Number of nodes in `state` per degree; index is the degree.
    pub fn degree_distribution(&self, state: NodeState) -> Vec<usize> {
        self.histogram(|s| s == state)
    }

    /// Degree histogram over all nodes.
    pub fn degree_histogram(&self) -> Vec<usize> {
        self.histogram(|_| true)
    }

    fn histogram(&self, keep: impl Fn(NodeState) -> bool) -> Vec<usize> {
        let mut hist = Vec::new();
        for (node, nbrs) in self.adjacency.iter().enumerate() {
            if !keep(self.state[node]) {
                continue;
            }
            let k = nbrs.len();
            if hist.len() <= k {
                hist.resize(k + 1, 0);
            }
            hist[k] += 1;
        }
        hist
    }

    /// One `src,dst` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for e in self.edges() {
            writeln!(out, "{},{}", e.lo(), e.hi())?;
        }
        Ok(())
    }

    /// One `node,state` line per node, state written as `C` or `D`.
    pub fn write_node_states<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, s) in self.state.iter().enumerate() {
            writeln!(out, "{i},{s}")?;
        }
        Ok(())
    }
}

/// Maps `k` in `0..n(n-1)/2` to the pair `(i, j)`, `i < j`, with
/// `k = j(j-1)/2 + i`.
fn pair_from_index(k: usize) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0) as usize;
    while j * (j - 1) / 2 > k {
        j -= 1;
    }
    while (j + 1) * j / 2 <= k {
        j += 1;
    }
    (k - j * (j - 1) / 2, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use NodeState::{Cooperator as C, Defector as D};

    #[test]
    fn pair_index_is_a_bijection() {
        let n = 40;
        let mut seen = std::collections::HashSet::new();
        for k in 0..max_edges(n) {
            let (i, j) = pair_from_index(k);
            assert!(i < j && j < n);
            assert!(seen.insert((i, j)));
        }
        assert_eq!(pair_from_index(0), (0, 1));
        assert_eq!(pair_from_index(1), (0, 2));
        assert_eq!(pair_from_index(2), (1, 2));
    }

    #[test]
    fn er_has_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = PlayerGraph::erdos_renyi(1000, 5000, &mut rng).unwrap();
        assert_eq!(g.m(), 5000);
        let total: usize = (0..1000).map(|i| g.degree(i)).sum();
        assert_eq!(total as f64 / 1000.0, 10.0);
        assert_eq!(g.recount(), g.counts());
    }

    #[test]
    fn er_forced_and_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = PlayerGraph::erdos_renyi(2, 1, &mut rng).unwrap();
        assert!(g.has_edge(0, 1));
        assert!(matches!(
            PlayerGraph::erdos_renyi(5, 11, &mut rng),
            Err(Error::TooManyEdges { max: 10, .. })
        ));
    }

    #[test]
    fn assign_states_exact_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = PlayerGraph::erdos_renyi(1000, 5000, &mut rng).unwrap();
        g.assign_states(0.5, &mut rng);
        assert_eq!(g.counts().n_c, 500);
        assert_eq!(g.recount(), g.counts());

        g.assign_states(0.0, &mut rng);
        assert_eq!(g.counts().n_c, 1000);
        assert_eq!(g.eligible_len(), 0);

        g.assign_states(1.0, &mut rng);
        assert_eq!(g.counts().n_c, 0);
        assert_eq!(g.eligible_len(), 0);
        g.set_variant(Variant::CdAndDd);
        assert_eq!(g.eligible_len(), 5000);
    }

    #[test]
    fn payoffs() {
        // X is C with neighbours {C, D, D}
        let g = PlayerGraph::from_parts(&[C, C, D, D], &[(0, 1), (0, 2), (0, 3)], Variant::CdOnly)
            .unwrap();
        assert_eq!(g.node_payoff(0.5, 0), 1.0);
        // D node with neighbours {C, C, D}
        let g = PlayerGraph::from_parts(&[D, C, C, D], &[(0, 1), (0, 2), (0, 3)], Variant::CdOnly)
            .unwrap();
        assert_eq!(g.node_payoff(0.5, 0), 3.5);
        let g = PlayerGraph::from_parts(&[D, C], &[], Variant::CdOnly).unwrap();
        assert_eq!(g.node_payoff(0.5, 0), 0.0);
        assert_eq!(g.node_payoff(0.5, 1), 0.0);
    }

    #[test]
    fn recount_small_graphs() {
        let g = PlayerGraph::from_parts(&[C, D], &[(0, 1)], Variant::CdOnly).unwrap();
        assert_eq!(
            g.recount(),
            TypeCounts {
                n_c: 1,
                n_cc: 0,
                n_cd: 1,
                n_dd: 0
            }
        );
        let g = PlayerGraph::from_parts(&[C, C, C], &[(0, 1), (1, 2), (0, 2)], Variant::CdOnly)
            .unwrap();
        assert_eq!(
            g.recount(),
            TypeCounts {
                n_c: 3,
                n_cc: 3,
                n_cd: 0,
                n_dd: 0
            }
        );
        let g = PlayerGraph::from_parts(
            &[C, D, C, D],
            &[(0, 1), (1, 2), (2, 3), (3, 0)],
            Variant::CdOnly,
        )
        .unwrap();
        assert_eq!(
            g.recount(),
            TypeCounts {
                n_c: 2,
                n_cc: 0,
                n_cd: 4,
                n_dd: 0
            }
        );
        assert_eq!(g.counts(), g.recount());
    }

    #[test]
    fn degree_distributions() {
        let g = PlayerGraph::from_parts(&[C, D], &[], Variant::CdOnly).unwrap();
        assert_eq!(g.degree_distribution(D), vec![1]);

        let g = PlayerGraph::from_parts(&[C, D, D, D], &[(0, 1), (0, 2), (0, 3)], Variant::CdOnly)
            .unwrap();
        assert_eq!(g.degree_distribution(C), vec![0, 0, 0, 1]);
        assert_eq!(g.degree_distribution(D), vec![0, 3]);
        assert_eq!(g.degree_histogram(), vec![0, 3, 0, 1]);
    }

    #[test]
    fn flip_updates_index() {
        let mut g = PlayerGraph::from_parts(
            &[C, D, C, D],
            &[(0, 1), (1, 2), (2, 3), (1, 3)],
            Variant::CdOnly,
        )
        .unwrap();
        assert_eq!(g.eligible_len(), 3);
        g.flip(1);
        assert_eq!(g.counts(), g.recount());
        assert_eq!(g.eligible_len(), 2);
        assert!(g.is_eligible(Edge::new(1, 3)));
        g.set_variant(Variant::CdAndDd);
        g.flip(0);
        assert_eq!(g.counts(), g.recount());
        assert_eq!(g.eligible_len(), g.m() - g.counts().n_cc);
    }

    #[test]
    fn add_remove_are_idempotent() {
        let mut g = PlayerGraph::new(3, Variant::CdOnly);
        assert!(g.add_edge(0, 1));
        assert!(!g.add_edge(1, 0));
        assert_eq!(g.m(), 1);
        assert!(g.remove_edge(1, 0));
        assert!(!g.remove_edge(0, 1));
        assert_eq!(g.m(), 0);
    }

    #[test]
    fn export_formats() {
        let g = PlayerGraph::from_parts(&[C, D, C], &[(2, 0), (1, 2)], Variant::CdOnly).unwrap();
        let mut edges = Vec::new();
        g.write_edge_list(&mut edges).unwrap();
        assert_eq!(String::from_utf8(edges).unwrap(), "0,2\n1,2\n");
        let mut states = Vec::new();
        g.write_node_states(&mut states).unwrap();
        assert_eq!(String::from_utf8(states).unwrap(), "0,C\n1,D\n2,C\n");
    }
}

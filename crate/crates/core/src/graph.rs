//! Weighted undirected relational graph built from embedding similarities.
//!
//! Nodes are addressed by dense indices whose order matches the lexicographic
//! order of their string ids, so "smallest index" and "smallest id" coincide
//! everywhere a tie has to be broken.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

/// Logit scale used when none is supplied: `exp(ln(1 / 0.07))`.
pub const DEFAULT_BETA: f64 = 1.0 / 0.07;
/// Upper clamp applied to the logit scale.
pub const MAX_BETA: f64 = 100.0;
/// Similarity threshold used when none is supplied.
pub const DEFAULT_TAU: f64 = 0.6;

/// Largest `f64` strictly below one. Sigmoid outputs are capped here so that
/// saturated weights still satisfy `w < 1`.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Index of a node inside a [`RelationalGraph`].
pub type NodeIx = usize;

/// Ordered set of node indices.
pub type NodeSet = BTreeSet<NodeIx>;

/// Opaque, cheaply clonable node identifier ordered lexicographically.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(Arc<str>);

impl NodeId {
    pub fn new(id: impl AsRef<str>) -> Self {
        NodeId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(Arc::from(s))
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One embedded item: id, unit-norm vector and optional ground-truth class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: NodeId,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Ground-truth class per node.
pub type LabelMap = HashMap<NodeId, String>;

/// Labels of the records that carry one.
pub fn labels_of(records: &[EmbeddingRecord]) -> LabelMap {
    records
        .iter()
        .filter_map(|r| r.label.clone().map(|l| (r.id.clone(), l)))
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("logit scale must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("no embeddings supplied")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid edge {a} -- {b}: {reason}")]
    InvalidEdge { a: String, b: String, reason: String },
}

fn sigmoid(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).min(BELOW_ONE)
}

fn effective_beta(beta: f64) -> Result<f64, GraphError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(GraphError::InvalidBeta(beta));
    }
    Ok(beta.min(MAX_BETA))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sigmoid of the logit-scaled inner product of two unit vectors.
///
/// `beta` is clamped to [`MAX_BETA`]. The result lies strictly inside `(0, 1)`.
pub fn compute_edge_weight(h_u: &[f64], h_v: &[f64], beta: f64) -> Result<f64, GraphError> {
    if h_u.len() != h_v.len() {
        return Err(GraphError::DimensionMismatch {
            left: h_u.len(),
            right: h_v.len(),
        });
    }
    let beta = effective_beta(beta)?;
    if h_u.iter().chain(h_v).any(|x| !x.is_finite()) {
        return Err(GraphError::NonFinite);
    }
    Ok(sigmoid(beta * dot(h_u, h_v)))
}

/// Undirected weighted graph with symmetric adjacency and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalGraph {
    ids: Vec<NodeId>,
    adjacency: Vec<BTreeMap<NodeIx, f64>>,
    edge_count: usize,
    tau: f64,
    beta: f64,
}

impl RelationalGraph {
    /// Graph with the given nodes and no edges. Ids are sorted.
    pub fn with_nodes(
        ids: impl IntoIterator<Item = NodeId>,
        tau: f64,
        beta: f64,
    ) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(GraphError::InvalidTau(tau));
        }
        let beta = effective_beta(beta)?;
        let mut ids: Vec<NodeId> = ids.into_iter().collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateId(w[0].clone()));
        }
        let n = ids.len();
        Ok(RelationalGraph {
            ids,
            adjacency: vec![BTreeMap::new(); n],
            edge_count: 0,
            tau,
            beta,
        })
    }

    /// Assemble a graph from explicit parts, validating every edge.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
        tau: f64,
        beta: f64,
    ) -> Result<Self, GraphError> {
        let mut g = Self::with_nodes(nodes, tau, beta)?;
        for (a, b, w) in edges {
            let bad = |reason: &str| GraphError::InvalidEdge {
                a: a.to_string(),
                b: b.to_string(),
                reason: reason.to_string(),
            };
            let ia = g.index_of(a.as_str()).ok_or_else(|| bad("unknown endpoint"))?;
            let ib = g.index_of(b.as_str()).ok_or_else(|| bad("unknown endpoint"))?;
            if ia == ib {
                return Err(bad("self-loop"));
            }
            if !(w > 0.0 && w < 1.0) {
                return Err(bad("weight outside (0, 1)"));
            }
            if w < g.tau {
                return Err(bad("weight below threshold"));
            }
            if g.adjacency[ia].contains_key(&ib) {
                return Err(bad("duplicate edge"));
            }
            g.insert_edge(ia, ib, w);
        }
        Ok(g)
    }

    fn insert_edge(&mut self, a: NodeIx, b: NodeIx, w: f64) {
        self.adjacency[a].insert(b, w);
        self.adjacency[b].insert(a, w);
        self.edge_count += 1;
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Node ids in index order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, ix: NodeIx) -> &NodeId {
        &self.ids[ix]
    }

    pub fn index_of(&self, id: &str) -> Option<NodeIx> {
        self.ids.binary_search_by(|probe| probe.as_str().cmp(id)).ok()
    }

    pub fn require(&self, id: &str) -> Result<NodeIx, GraphError> {
        self.index_of(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn weight(&self, a: NodeIx, b: NodeIx) -> Option<f64> {
        self.adjacency.get(a)?.get(&b).copied()
    }

    /// Neighbours of `v` with edge weights, in index order.
    pub fn neighbors(&self, v: NodeIx) -> impl Iterator<Item = (NodeIx, f64)> + '_ {
        self.adjacency[v].iter().map(|(&u, &w)| (u, w))
    }

    pub fn degree(&self, v: NodeIx) -> usize {
        self.adjacency[v].len()
    }

    /// All edges as `(a, b, w)` with `a < b`, ordered by `(a, b)`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeIx, NodeIx, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, row)| {
            row.range(a + 1..).map(move |(&b, &w)| (a, b, w))
        })
    }

    /// `2|E| / (|V| (|V| - 1))`, zero for graphs with fewer than two nodes.
    pub fn density(&self) -> f64 {
        let n = self.node_count() as f64;
        if n < 2.0 {
            0.0
        } else {
            2.0 * self.edge_count as f64 / (n * (n - 1.0))
        }
    }

    /// Sum of incident edge weights, optionally restricted to neighbours in `within`.
    pub fn weighted_degree(&self, v: NodeIx, within: Option<&NodeSet>) -> Result<f64, GraphError> {
        let row = self
            .adjacency
            .get(v)
            .ok_or_else(|| GraphError::UnknownNode(format!("#{v}")))?;
        Ok(match within {
            None => row.values().sum(),
            Some(set) => row
                .iter()
                .filter(|(u, _)| set.contains(u))
                .map(|(_, w)| w)
                .sum(),
        })
    }

    /// Nodes adjacent to some member of `members` but not in it.
    pub fn cluster_neighborhood(&self, members: &NodeSet) -> NodeSet {
        members
            .iter()
            .flat_map(|&v| self.adjacency[v].keys().copied())
            .filter(|u| !members.contains(u))
            .collect()
    }

    /// Delete every edge between `v` and a member of `members`.
    pub fn remove_cluster_candidate_edges(&mut self, members: &NodeSet, v: NodeIx) -> usize {
        let targets: Vec<NodeIx> = self.adjacency[v]
            .keys()
            .copied()
            .filter(|u| members.contains(u) && *u != v)
            .collect();
        for &u in &targets {
            self.adjacency[v].remove(&u);
            self.adjacency[u].remove(&v);
        }
        self.edge_count -= targets.len();
        targets.len()
    }

    /// Delete every edge with one endpoint in `a` and the other in `b`.
    pub fn remove_edge_boundary(&mut self, a: &NodeSet, b: &NodeSet) -> usize {
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let mut removed = 0;
        for &v in small {
            if large.contains(&v) {
                continue;
            }
            removed += self.remove_cluster_candidate_edges(large, v);
        }
        removed
    }

    /// Maximal connected node sets, each sorted, listed by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<NodeIx>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &u in self.adjacency[v].keys() {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    /// Subgraph induced by the sorted node list `nodes`.
    ///
    /// Local index `i` corresponds to `nodes[i]`; relative order is preserved.
    pub fn induced_subgraph(&self, nodes: &[NodeIx]) -> RelationalGraph {
        let local: HashMap<NodeIx, NodeIx> =
            nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut adjacency = vec![BTreeMap::new(); nodes.len()];
        let mut twice = 0;
        for (i, &v) in nodes.iter().enumerate() {
            for (u, &w) in &self.adjacency[v] {
                if let Some(&j) = local.get(u) {
                    adjacency[i].insert(j, w);
                    twice += 1;
                }
            }
        }
        RelationalGraph {
            ids: nodes.iter().map(|&v| self.ids[v].clone()).collect(),
            adjacency,
            edge_count: twice / 2,
            tau: self.tau,
            beta: self.beta,
        }
    }
}

/// Threshold the pairwise weights of `embeddings` into a relational graph.
///
/// An edge is kept when its weight is at least `tau`.
pub fn build_graph(
    embeddings: &[EmbeddingRecord],
    beta: f64,
    tau: f64,
) -> Result<RelationalGraph, GraphError> {
    build_graph_with(embeddings, beta, tau, Execution::default())
}

pub fn build_graph_with(
    embeddings: &[EmbeddingRecord],
    beta: f64,
    tau: f64,
    exec: Execution,
) -> Result<RelationalGraph, GraphError> {
    if embeddings.is_empty() {
        return Err(GraphError::Empty);
    }
    let dim = embeddings[0].vector.len();
    for r in embeddings {
        if r.vector.len() != dim {
            return Err(GraphError::DimensionMismatch {
                left: dim,
                right: r.vector.len(),
            });
        }
        if r.vector.iter().any(|x| !x.is_finite()) {
            return Err(GraphError::NonFinite);
        }
    }
    let mut g = RelationalGraph::with_nodes(embeddings.iter().map(|r| r.id.clone()), tau, beta)?;
    let beta = g.beta;
    // Records in graph index order.
    let mut order: Vec<&EmbeddingRecord> = embeddings.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let rows: Vec<usize> = (0..order.len()).collect();
    let kept: Vec<Vec<(NodeIx, f64)>> = par::map(exec, &rows, |&i| {
        let hi = &order[i].vector;
        ((i + 1)..order.len())
            .filter_map(|j| {
                let w = sigmoid(beta * dot(hi, &order[j].vector));
                (w >= tau).then_some((j, w))
            })
            .collect()
    });
    for (i, row) in kept.into_iter().enumerate() {
        for (j, w) in row {
            g.insert_edge(i, j, w);
        }
    }
    Ok(g)
}

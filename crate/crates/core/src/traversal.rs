//! Oracle-guided cluster expansion over a relational graph.
//!
//! Each connected component is traversed independently: seed a cluster at
//! the node of highest weighted degree, repeatedly offer the frontier node
//! with the strongest connection to the cluster to the oracle, absorb it on
//! Yes, cut its edges into the cluster on No, and emit the cluster once its
//! frontier is empty. The clusters of all components then go through a
//! global merge pass that asks the oracle about pairs of clusters.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NodeId, NodeIx, NodeSet, RelationalGraph};
use crate::oracle::{MembershipOracle, MembershipQuery, MergeQuery, OracleDecision, OracleError};
use crate::par::{self, Execution};
use crate::partition::Partition;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid traversal configuration: {0}")]
    Config(String),
    #[error("component is empty")]
    EmptyComponent,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("oracle failed: {source}")]
    Oracle {
        #[source]
        source: OracleError,
        /// Counters accumulated before the failure.
        trace: Box<TraversalTrace>,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl EngineError {
    /// Counters gathered before an oracle failure, if any.
    pub fn partial_trace(&self) -> Option<&TraversalTrace> {
        match self {
            EngineError::Oracle { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Order in which the merge pass visits cluster pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeStrategy {
    /// Always ask the un-asked pair with the largest boundary weight next;
    /// restart after every merge.
    #[default]
    Ranked,
    /// Each round, every cluster proposes its best un-asked partner; all
    /// proposals are assessed, then accepted merges are applied together.
    Rounds,
}

impl std::str::FromStr for MergeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ranked" => Ok(Self::Ranked),
            "rounds" => Ok(Self::Rounds),
            other => Err(format!("unknown merge strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraversalConfig {
    /// Representatives shown to the oracle per cluster.
    pub k: usize,
    /// Frontier nodes assessed per expansion step.
    pub num_candidates: usize,
    /// Extra queries after an `Unknown` before treating it as No.
    pub unknown_retries: usize,
    pub seed: u64,
    /// User interest the oracle judges by.
    pub aspect: String,
    pub merge_strategy: MergeStrategy,
    pub log_steps: bool,
    pub execution: Execution,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        TraversalConfig {
            k: 3,
            num_candidates: 1,
            unknown_retries: 2,
            seed: 0,
            aspect: "category".into(),
            merge_strategy: MergeStrategy::default(),
            log_steps: false,
            execution: Execution::default(),
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k == 0 {
            return Err(EngineError::Config("k must be at least 1".into()));
        }
        if self.num_candidates == 0 {
            return Err(EngineError::Config(
                "num_candidates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Membership,
    Merge,
}

/// One oracle query.
///
/// For membership steps `cluster` is the cluster seed and `candidate` the
/// node offered. For merge steps both are the smallest member ids of the two
/// clusters and `candidate_representatives` holds the second cluster's
/// representatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: StepKind,
    pub cluster: NodeId,
    pub candidate: NodeId,
    pub representatives: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_representatives: Vec<NodeId>,
    pub decision: OracleDecision,
}

/// Counters for one run. `membership_assessments` is always
/// `accepts + rejects + unknowns`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraversalTrace {
    pub membership_assessments: u64,
    pub merge_assessments: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub unknowns: u64,
    pub merge_unknowns: u64,
    pub edges_removed: u64,
    pub merges_performed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepRecord>,
}

impl TraversalTrace {
    pub fn absorb(&mut self, other: TraversalTrace) {
        self.membership_assessments += other.membership_assessments;
        self.merge_assessments += other.merge_assessments;
        self.accepts += other.accepts;
        self.rejects += other.rejects;
        self.unknowns += other.unknowns;
        self.merge_unknowns += other.merge_unknowns;
        self.edges_removed += other.edges_removed;
        self.merges_performed += other.merges_performed;
        self.steps.extend(other.steps);
    }
}

/// A finished cluster. Members keep insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<NodeId>,
    pub representatives: Vec<NodeId>,
}

fn by_weight_then_index(a: (NodeIx, f64), b: (NodeIx, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn argmax_smallest(items: impl Iterator<Item = (NodeIx, f64)>) -> Option<NodeIx> {
    items.min_by(|&a, &b| by_weight_then_index(a, b)).map(|(v, _)| v)
}

/// Node of `component` with the largest weighted degree inside it.
pub fn seed_cluster(g: &RelationalGraph, component: &NodeSet) -> Result<NodeIx, EngineError> {
    if component.is_empty() {
        return Err(EngineError::EmptyComponent);
    }
    let degrees = component
        .iter()
        .map(|&v| Ok((v, g.weighted_degree(v, Some(component))?)))
        .collect::<Result<Vec<_>, GraphError>>()?;
    Ok(argmax_smallest(degrees.into_iter()).expect("nonempty component"))
}

/// Frontier node with the largest total edge weight into `members`.
pub fn select_candidate(g: &RelationalGraph, members: &NodeSet) -> Option<NodeIx> {
    let frontier = g.cluster_neighborhood(members);
    argmax_smallest(frontier.into_iter().map(|v| {
        let conn = g
            .neighbors(v)
            .filter(|(u, _)| members.contains(u))
            .map(|(_, w)| w)
            .sum();
        (v, conn)
    }))
}

/// The `k` best entries of `ranked` under [`by_weight_then_index`], in order.
fn top_k(mut ranked: Vec<(NodeIx, f64)>, k: usize) -> Vec<(NodeIx, f64)> {
    if ranked.len() > k && k > 0 {
        ranked.select_nth_unstable_by(k - 1, |&a, &b| by_weight_then_index(a, b));
    }
    ranked.truncate(k);
    ranked.sort_by(|&a, &b| by_weight_then_index(a, b));
    ranked
}

/// Top `min(k, |members|)` members by weighted degree within `members`.
pub fn select_representatives(g: &RelationalGraph, members: &NodeSet, k: usize) -> Vec<NodeIx> {
    let ranked = members
        .iter()
        .map(|&v| {
            let within = g
                .neighbors(v)
                .filter(|(u, _)| members.contains(u))
                .map(|(_, w)| w)
                .sum();
            (v, within)
        })
        .collect();
    top_k(ranked, k).into_iter().map(|(v, _)| v).collect()
}

fn ids_of(g: &RelationalGraph, ixs: &[NodeIx]) -> Vec<NodeId> {
    ixs.iter().map(|&v| g.id(v).clone()).collect()
}

/// Query with retries on `Unknown`. Returns the final decision; each query
/// is counted by `count`.
fn ask_with_retries(
    retries: usize,
    mut ask: impl FnMut() -> Result<OracleDecision, OracleError>,
    mut count: impl FnMut(OracleDecision),
) -> Result<OracleDecision, OracleError> {
    let mut decision = OracleDecision::Unknown;
    for _ in 0..=retries {
        decision = ask()?;
        count(decision);
        if decision != OracleDecision::Unknown {
            break;
        }
    }
    Ok(decision)
}

fn oracle_failure(source: OracleError, trace: &TraversalTrace) -> EngineError {
    EngineError::Oracle {
        source,
        trace: Box::new(trace.clone()),
    }
}

/// Partition `component` into clusters by oracle-guided expansion.
///
/// Edges between a rejected candidate and the cluster are removed from `g`.
pub fn traverse_component(
    g: &mut RelationalGraph,
    component: &NodeSet,
    oracle: &dyn MembershipOracle,
    config: &TraversalConfig,
    trace: &mut TraversalTrace,
) -> Result<Vec<Cluster>, EngineError> {
    config.validate()?;
    if component.is_empty() {
        return Err(EngineError::EmptyComponent);
    }
    if let Some(&v) = component.iter().find(|&&v| v >= g.node_count()) {
        return Err(GraphError::UnknownNode(format!("#{v}")).into());
    }
    let mut remaining = component.clone();
    let mut clusters = Vec::new();

    while !remaining.is_empty() {
        let seed = seed_cluster(g, &remaining)?;
        let mut members = vec![seed];
        let mut set: NodeSet = BTreeSet::from([seed]);
        let mut reps = vec![seed];
        // Member -> weighted degree inside the cluster, kept current on accept.
        let mut within: BTreeMap<NodeIx, f64> = BTreeMap::from([(seed, 0.0)]);
        // Frontier node -> total weight of its edges into the cluster.
        let mut frontier: BTreeMap<NodeIx, f64> = BTreeMap::new();
        for (u, w) in g.neighbors(seed) {
            if remaining.contains(&u) {
                *frontier.entry(u).or_default() += w;
            }
        }

        while !frontier.is_empty() {
            let ranked = top_k(
                frontier.iter().map(|(&v, &c)| (v, c)).collect(),
                config.num_candidates,
            );

            let rep_ids = ids_of(g, &reps);
            let mut accepted = Vec::new();
            let mut rejected = Vec::new();
            for &(cand, _) in &ranked {
                let cand_id = g.id(cand).clone();
                let query = MembershipQuery {
                    representatives: &rep_ids,
                    candidate: &cand_id,
                    aspect: &config.aspect,
                };
                let mut log = Vec::new();
                let decision = ask_with_retries(
                    config.unknown_retries,
                    || oracle.assess_membership(&query),
                    |d| {
                        trace.membership_assessments += 1;
                        match d {
                            OracleDecision::Yes => trace.accepts += 1,
                            OracleDecision::No => trace.rejects += 1,
                            OracleDecision::Unknown => trace.unknowns += 1,
                        }
                        log.push(d);
                    },
                )
                .map_err(|e| oracle_failure(e, trace))?;
                if config.log_steps {
                    for d in log {
                        trace.steps.push(StepRecord {
                            kind: StepKind::Membership,
                            cluster: g.id(seed).clone(),
                            candidate: cand_id.clone(),
                            representatives: rep_ids.clone(),
                            candidate_representatives: Vec::new(),
                            decision: d,
                        });
                    }
                }
                if decision == OracleDecision::Yes {
                    accepted.push(cand);
                } else {
                    rejected.push(cand);
                }
            }

            for &v in &accepted {
                frontier.remove(&v);
                set.insert(v);
                members.push(v);
                let mut own = 0.0;
                for (u, w) in g.neighbors(v) {
                    if let Some(d) = within.get_mut(&u) {
                        *d += w;
                        own += w;
                    } else if remaining.contains(&u) {
                        *frontier.entry(u).or_default() += w;
                    }
                }
                within.insert(v, own);
            }
            if !accepted.is_empty() {
                let ranked = within.iter().map(|(&v, &d)| (v, d)).collect();
                reps = top_k(ranked, config.k).into_iter().map(|(v, _)| v).collect();
            }
            for &v in &rejected {
                frontier.remove(&v);
                trace.edges_removed += g.remove_cluster_candidate_edges(&set, v) as u64;
            }
        }

        for v in &members {
            remaining.remove(v);
        }
        clusters.push(Cluster {
            members: ids_of(g, &members),
            representatives: ids_of(g, &reps),
        });
    }
    Ok(clusters)
}

#[derive(Debug, Clone, Copy)]
struct PairKey {
    weight: f64,
    lo_key: NodeIx,
    hi_key: NodeIx,
    lo: usize,
    hi: usize,
}

impl PartialEq for PairKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PairKey {}

impl PartialOrd for PairKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PairKey {
    // Heaviest boundary first, then by the clusters' smallest member ids.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then(self.lo_key.cmp(&other.lo_key))
            .then(self.hi_key.cmp(&other.hi_key))
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

struct MergeCluster {
    members: Vec<NodeIx>,
    set: NodeSet,
    reps: Vec<NodeIx>,
    key: NodeIx,
}

/// Cluster bookkeeping shared by both merge strategies.
struct MergeState<'g> {
    g: &'g mut RelationalGraph,
    slots: Vec<Option<MergeCluster>>,
    /// Boundary weight per live slot pair `(lo, hi)` with `lo < hi`.
    boundary: HashMap<(usize, usize), f64>,
}

impl<'g> MergeState<'g> {
    fn new(g: &'g mut RelationalGraph, clusters: &[Cluster], k: usize) -> Result<Self, EngineError> {
        let mut owner = vec![usize::MAX; g.node_count()];
        let mut slots = Vec::with_capacity(clusters.len());
        for (slot, c) in clusters.iter().enumerate() {
            let members = c
                .members
                .iter()
                .map(|id| g.require(id.as_str()))
                .collect::<Result<Vec<_>, _>>()?;
            for &v in &members {
                if owner[v] != usize::MAX {
                    return Err(EngineError::Invariant(format!(
                        "node `{}` is in two clusters",
                        g.id(v)
                    )));
                }
                owner[v] = slot;
            }
            let set: NodeSet = members.iter().copied().collect();
            let key = *set.first().ok_or_else(|| EngineError::Invariant("empty cluster".into()))?;
            // Keep the representatives a traversal handed over; recompute otherwise.
            let reps = if c.representatives.is_empty() {
                select_representatives(g, &set, k)
            } else {
                c.representatives
                    .iter()
                    .map(|id| g.require(id.as_str()))
                    .collect::<Result<Vec<_>, _>>()?
            };
            slots.push(Some(MergeCluster {
                members,
                set,
                reps,
                key,
            }));
        }
        let mut boundary: HashMap<(usize, usize), f64> = HashMap::new();
        for (a, b, w) in g.edges() {
            let (ca, cb) = (owner[a], owner[b]);
            if ca == usize::MAX || cb == usize::MAX || ca == cb {
                continue;
            }
            *boundary.entry((ca.min(cb), ca.max(cb))).or_default() += w;
        }
        Ok(MergeState { g, slots, boundary })
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|_| i))
    }

    fn cluster(&self, slot: usize) -> &MergeCluster {
        self.slots[slot].as_ref().expect("live slot")
    }

    fn pair_key(&self, a: usize, b: usize) -> PairKey {
        let (ka, kb) = (self.cluster(a).key, self.cluster(b).key);
        let (lo, hi) = if ka <= kb { (a, b) } else { (b, a) };
        PairKey {
            weight: self
                .boundary
                .get(&(a.min(b), a.max(b)))
                .copied()
                .unwrap_or(0.0),
            lo_key: ka.min(kb),
            hi_key: ka.max(kb),
            lo,
            hi,
        }
    }

    /// Ask the oracle about `(lo, hi)`; returns the final decision.
    fn assess(
        &self,
        lo: usize,
        hi: usize,
        oracle: &dyn MembershipOracle,
        config: &TraversalConfig,
        trace: &mut TraversalTrace,
    ) -> Result<OracleDecision, EngineError> {
        let (a, b) = (self.cluster(lo), self.cluster(hi));
        let reps_a = ids_of(self.g, &a.reps);
        let reps_b = ids_of(self.g, &b.reps);
        let query = MergeQuery {
            representatives_a: &reps_a,
            representatives_b: &reps_b,
            aspect: &config.aspect,
        };
        let mut log = Vec::new();
        let decision = ask_with_retries(
            config.unknown_retries,
            || oracle.assess_merge(&query),
            |d| {
                trace.merge_assessments += 1;
                if d == OracleDecision::Unknown {
                    trace.merge_unknowns += 1;
                }
                log.push(d);
            },
        )
        .map_err(|e| oracle_failure(e, trace))?;
        if config.log_steps {
            for d in log {
                trace.steps.push(StepRecord {
                    kind: StepKind::Merge,
                    cluster: self.g.id(a.key).clone(),
                    candidate: self.g.id(b.key).clone(),
                    representatives: reps_a.clone(),
                    candidate_representatives: reps_b.clone(),
                    decision: d,
                });
            }
        }
        Ok(decision)
    }

    fn separate(&mut self, a: usize, b: usize, trace: &mut TraversalTrace) {
        let removed = {
            let (ca, cb) = (
                self.slots[a].as_ref().expect("live slot"),
                self.slots[b].as_ref().expect("live slot"),
            );
            self.g.remove_edge_boundary(&ca.set, &cb.set)
        };
        trace.edges_removed += removed as u64;
        self.boundary.remove(&(a.min(b), a.max(b)));
    }

    /// Merge `hi` into a new slot together with `lo`; returns the new slot.
    fn merge(&mut self, lo: usize, hi: usize, k: usize, trace: &mut TraversalTrace) -> usize {
        let a = self.slots[lo].take().expect("live slot");
        let b = self.slots[hi].take().expect("live slot");
        let new = self.slots.len();
        let mut members = a.members;
        members.extend(b.members);
        let mut set = a.set;
        set.extend(b.set);
        let reps = select_representatives(self.g, &set, k);
        let key = a.key.min(b.key);

        let others: Vec<usize> = self.live().collect();
        for z in others {
            let w: f64 = [lo, hi]
                .iter()
                .filter_map(|&s| self.boundary.remove(&(s.min(z), s.max(z))))
                .sum();
            if w != 0.0 {
                self.boundary.insert((z, new), w);
            }
        }
        self.boundary.remove(&(lo.min(hi), lo.max(hi)));
        self.slots.push(Some(MergeCluster {
            members,
            set,
            reps,
            key,
        }));
        trace.merges_performed += 1;
        new
    }

    fn into_clusters(self) -> Vec<Cluster> {
        let g = &*self.g;
        let mut out: Vec<(NodeIx, Cluster)> = self
            .slots
            .into_iter()
            .flatten()
            .map(|c| {
                (
                    c.key,
                    Cluster {
                        members: ids_of(g, &c.members),
                        representatives: ids_of(g, &c.reps),
                    },
                )
            })
            .collect();
        out.sort_by_key(|(k, _)| *k);
        out.into_iter().map(|(_, c)| c).collect()
    }
}

fn merge_ranked(
    state: &mut MergeState<'_>,
    oracle: &dyn MembershipOracle,
    config: &TraversalConfig,
    trace: &mut TraversalTrace,
) -> Result<(), EngineError> {
    // Pairs not yet asked while both sides are unchanged.
    let mut pending: BTreeSet<PairKey> = BTreeSet::new();
    let live: Vec<usize> = state.live().collect();
    for (i, &a) in live.iter().enumerate() {
        for &b in &live[i + 1..] {
            pending.insert(state.pair_key(a, b));
        }
    }
    while let Some(pair) = pending.pop_first() {
        match state.assess(pair.lo, pair.hi, oracle, config, trace)? {
            OracleDecision::Yes => {
                let others: Vec<usize> = state
                    .live()
                    .filter(|&z| z != pair.lo && z != pair.hi)
                    .collect();
                for &z in &others {
                    for s in [pair.lo, pair.hi] {
                        pending.remove(&state.pair_key(s, z));
                    }
                }
                let new = state.merge(pair.lo, pair.hi, config.k, trace);
                for &z in &others {
                    pending.insert(state.pair_key(new, z));
                }
            }
            _ => state.separate(pair.lo, pair.hi, trace),
        }
    }
    Ok(())
}

fn merge_rounds(
    state: &mut MergeState<'_>,
    oracle: &dyn MembershipOracle,
    config: &TraversalConfig,
    trace: &mut TraversalTrace,
) -> Result<(), EngineError> {
    let mut asked: HashSet<(usize, usize)> = HashSet::new();
    loop {
        let mut live: Vec<usize> = state.live().collect();
        live.sort_by_key(|&s| state.cluster(s).key);
        let mut proposals: Vec<(usize, usize)> = Vec::new();
        for &a in &live {
            let best = live
                .iter()
                .filter(|&&b| b != a && !asked.contains(&(a.min(b), a.max(b))))
                .map(|&b| state.pair_key(a, b))
                .min();
            if let Some(p) = best {
                if !proposals.contains(&(p.lo, p.hi)) {
                    proposals.push((p.lo, p.hi));
                }
            }
        }
        if proposals.is_empty() {
            return Ok(());
        }
        let mut accepted = Vec::new();
        for &(lo, hi) in &proposals {
            asked.insert((lo.min(hi), lo.max(hi)));
            match state.assess(lo, hi, oracle, config, trace)? {
                OracleDecision::Yes => accepted.push((lo, hi)),
                _ => state.separate(lo, hi, trace),
            }
        }
        for (lo, hi) in accepted {
            if state.slots[lo].is_some() && state.slots[hi].is_some() {
                state.merge(lo, hi, config.k, trace);
            }
        }
    }
}

/// Merge redundant clusters by asking the oracle about cluster pairs.
///
/// A Yes unions the pair. A No (or an `Unknown` that survives its retries)
/// cuts every edge between the pair, which is then not asked again until
/// one side changes.
pub fn merge_clusters(
    g: &mut RelationalGraph,
    clusters: Vec<Cluster>,
    oracle: &dyn MembershipOracle,
    config: &TraversalConfig,
    trace: &mut TraversalTrace,
) -> Result<Vec<Cluster>, EngineError> {
    config.validate()?;
    if clusters.len() < 2 {
        return Ok(clusters);
    }
    let mut state = MergeState::new(g, &clusters, config.k)?;
    match config.merge_strategy {
        MergeStrategy::Ranked => merge_ranked(&mut state, oracle, config, trace)?,
        MergeStrategy::Rounds => merge_rounds(&mut state, oracle, config, trace)?,
    }
    Ok(state.into_clusters())
}

/// Traverse every component, then merge, returning a partition of all nodes.
///
/// Components are traversed on private copies of their subgraphs, in
/// parallel when `config.execution` allows, and the edge removals are
/// written back before the sequential merge pass.
pub fn run_clustering(
    g: &mut RelationalGraph,
    oracle: &dyn MembershipOracle,
    config: &TraversalConfig,
) -> Result<(Partition, TraversalTrace), EngineError> {
    config.validate()?;
    if g.node_count() == 0 {
        return Err(EngineError::EmptyComponent);
    }
    let components = g.connected_components();
    let base: &RelationalGraph = g;
    let outcomes = par::map_owned(config.execution, components, |nodes| {
        let mut sub = base.induced_subgraph(&nodes);
        let all: NodeSet = (0..nodes.len()).collect();
        let mut trace = TraversalTrace::default();
        let result = traverse_component(&mut sub, &all, oracle, config, &mut trace);
        (nodes, sub, result, trace)
    });

    let mut trace = TraversalTrace::default();
    let mut clusters = Vec::new();
    let mut failure = None;
    let mut updates = Vec::new();
    for (nodes, sub, result, component_trace) in outcomes {
        trace.absorb(component_trace);
        match result {
            Ok(cs) => {
                clusters.extend(cs);
                updates.push((nodes, sub));
            }
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    for (nodes, sub) in &updates {
        remove_missing_edges(g, nodes, sub);
    }
    if let Some(err) = failure {
        return Err(match err {
            EngineError::Oracle { source, .. } => EngineError::Oracle {
                source,
                trace: Box::new(trace),
            },
            other => other,
        });
    }

    let clusters = merge_clusters(g, clusters, oracle, config, &mut trace)?;
    let partition = Partition::new(clusters.into_iter().map(|c| c.members).collect());
    partition
        .check_covers(g.ids())
        .map_err(EngineError::Invariant)?;
    Ok((partition, trace))
}

/// Drop edges of `g` among `nodes` that no longer exist in `sub`.
fn remove_missing_edges(g: &mut RelationalGraph, nodes: &[NodeIx], sub: &RelationalGraph) {
    let mut gone = Vec::new();
    for (i, &v) in nodes.iter().enumerate() {
        for (u, _) in g.neighbors(v) {
            if u <= v {
                continue;
            }
            if let Ok(j) = nodes.binary_search(&u) {
                if sub.weight(i, j).is_none() {
                    gone.push((v, u));
                }
            }
        }
    }
    for (v, u) in gone {
        g.remove_cluster_candidate_edges(&BTreeSet::from([v]), u);
    }
}

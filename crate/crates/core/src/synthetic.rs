//! Planted-partition datasets: class prototypes on the unit sphere plus
//! isotropic Gaussian noise.
//!
//! Sampling uses ChaCha8 seeded from `PlantedSpec::seed` and the ziggurat
//! standard normal from `rand_distr`, so a spec produces the same vectors on
//! every platform.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_io::DatasetManifest;
use crate::graph::{EmbeddingRecord, LabelMap, NodeId, NodeIx, RelationalGraph};

pub const DEFAULT_MIN_SEPARATION: f64 = 0.5;

/// Prototype draws per class before a spec is declared infeasible.
const MAX_PROTOTYPE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
#[error("invalid planted spec: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub dimension: usize,
    pub noise_sigma: f64,
    /// Class proportions. Empty means equal shares.
    #[serde(default)]
    pub class_balance: Vec<f64>,
    pub seed: u64,
    /// Every pair of prototypes has dot product below this bound.
    #[serde(default = "default_separation")]
    pub min_prototype_separation: f64,
}

fn default_separation() -> f64 {
    DEFAULT_MIN_SEPARATION
}

impl PlantedSpec {
    /// Balanced classes with the default separation.
    pub fn balanced(n_nodes: usize, n_classes: usize, dimension: usize, noise_sigma: f64, seed: u64) -> Self {
        PlantedSpec {
            n_nodes,
            n_classes,
            dimension,
            noise_sigma,
            class_balance: Vec::new(),
            seed,
            min_prototype_separation: DEFAULT_MIN_SEPARATION,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let fail = |m: String| Err(SpecError(m));
        if self.n_classes == 0 {
            return fail("n_classes must be at least 1".into());
        }
        if self.n_classes > self.n_nodes {
            return fail(format!(
                "n_classes ({}) exceeds n_nodes ({})",
                self.n_classes, self.n_nodes
            ));
        }
        if self.dimension < 2 {
            return fail("dimension must be at least 2".into());
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return fail(format!("noise_sigma must be finite and nonnegative, got {}", self.noise_sigma));
        }
        if !self.min_prototype_separation.is_finite() {
            return fail("min_prototype_separation must be finite".into());
        }
        if !self.class_balance.is_empty() {
            if self.class_balance.len() != self.n_classes {
                return fail(format!(
                    "class_balance has {} entries for {} classes",
                    self.class_balance.len(),
                    self.n_classes
                ));
            }
            if self.class_balance.iter().any(|&p| !p.is_finite() || p <= 0.0) {
                return fail("class proportions must be positive".into());
            }
            let total: f64 = self.class_balance.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return fail(format!("class proportions sum to {total}, not 1"));
            }
        }
        Ok(())
    }

    /// Class sizes by largest remainder, each class getting at least one node.
    pub fn class_sizes(&self) -> Vec<usize> {
        let c = self.n_classes;
        let shares: Vec<f64> = if self.class_balance.is_empty() {
            vec![1.0 / c as f64; c]
        } else {
            self.class_balance.clone()
        };
        // One node per class up front, the rest apportioned by share.
        let spare = self.n_nodes - c;
        let quotas: Vec<f64> = shares.iter().map(|p| p * spare as f64).collect();
        let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = spare - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes.iter_mut().for_each(|s| *s += 1);
        sizes
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dimension: usize, scale: f64) -> Vec<f64> {
    (0..dimension)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sample_prototypes(spec: &PlantedSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, SpecError> {
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(spec.n_classes);
    for class in 0..spec.n_classes {
        let mut attempts = 0;
        loop {
            if attempts == MAX_PROTOTYPE_ATTEMPTS {
                return Err(SpecError(format!(
                    "could not place prototype {class} with pairwise dot below {} in {} dimensions",
                    spec.min_prototype_separation, spec.dimension
                )));
            }
            attempts += 1;
            let Some(p) = normalized(gaussian_vector(rng, spec.dimension, 1.0)) else {
                continue;
            };
            if prototypes
                .iter()
                .all(|q| dot(&p, q) < spec.min_prototype_separation)
            {
                prototypes.push(p);
                break;
            }
        }
    }
    Ok(prototypes)
}

/// Ids `n000`, `n001`, ... padded to a common width so they sort numerically.
pub fn node_ids(n: usize) -> Vec<NodeId> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| NodeId::new(format!("n{i:0width$}"))).collect()
}

pub fn class_label(class: usize) -> String {
    format!("c{class}")
}

/// Labeled records plus a manifest pointing at `embeddings.jsonl`.
pub fn generate_dataset(spec: &PlantedSpec) -> Result<(Vec<EmbeddingRecord>, DatasetManifest), SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes = sample_prototypes(spec, &mut rng)?;

    let mut classes: Vec<usize> = spec
        .class_sizes()
        .into_iter()
        .enumerate()
        .flat_map(|(c, size)| std::iter::repeat_n(c, size))
        .collect();
    classes.shuffle(&mut rng);

    let records = node_ids(spec.n_nodes)
        .into_iter()
        .zip(classes)
        .map(|(id, class)| {
            let proto = &prototypes[class];
            let vector = loop {
                let noise = gaussian_vector(&mut rng, spec.dimension, spec.noise_sigma);
                let point = proto.iter().zip(&noise).map(|(p, e)| p + e).collect();
                if let Some(v) = normalized(point) {
                    break v;
                }
            };
            EmbeddingRecord {
                id,
                vector,
                label: Some(class_label(class)),
            }
        })
        .collect();

    let manifest = DatasetManifest {
        name: format!(
            "planted-n{}-c{}-d{}-s{}",
            spec.n_nodes, spec.n_classes, spec.dimension, spec.seed
        ),
        aspect: "class".into(),
        embeddings_path: PathBuf::from("embeddings.jsonl"),
        dimension: spec.dimension,
        label_set: Some((0..spec.n_classes).map(class_label).collect()),
    };
    Ok((records, manifest))
}

/// How far a graph is from its ground-truth partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    /// Share of edges joining different classes; 0 for an edgeless graph.
    pub wrong_edge_fraction: f64,
    /// Same-class pairs with no path inside their class subgraph.
    pub missing_intra_pairs: u64,
    /// Connected components of each class subgraph.
    pub components_per_class: BTreeMap<String, usize>,
}

/// Unlabeled nodes are ignored.
pub fn graph_noise_report(g: &RelationalGraph, labels: &LabelMap) -> NoiseReport {
    let label: Vec<Option<&str>> = g
        .ids()
        .iter()
        .map(|id| labels.get(id).map(String::as_str))
        .collect();

    let (mut total, mut wrong) = (0u64, 0u64);
    let mut parent: Vec<NodeIx> = (0..g.node_count()).collect();
    fn find(parent: &mut [NodeIx], mut v: NodeIx) -> NodeIx {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for (a, b, _) in g.edges() {
        let (Some(la), Some(lb)) = (label[a], label[b]) else {
            continue;
        };
        total += 1;
        if la != lb {
            wrong += 1;
        } else {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    // Component sizes per class.
    let mut sizes: BTreeMap<&str, BTreeMap<NodeIx, u64>> = BTreeMap::new();
    for (v, l) in label.iter().enumerate() {
        if let Some(l) = *l {
            let root = find(&mut parent, v);
            *sizes.entry(l).or_default().entry(root).or_default() += 1;
        }
    }
    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let mut missing = 0;
    let mut components_per_class = BTreeMap::new();
    for (l, comps) in &sizes {
        let n: u64 = comps.values().sum();
        missing += pairs(n) - comps.values().map(|&s| pairs(s)).sum::<u64>();
        components_per_class.insert(l.to_string(), comps.len());
    }

    NoiseReport {
        wrong_edge_fraction: if total == 0 { 0.0 } else { wrong as f64 / total as f64 },
        missing_intra_pairs: missing,
        components_per_class,
    }
}

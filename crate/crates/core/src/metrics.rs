//! Normalized Mutual Information and Rand Index against ground-truth labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LabelMap;
use crate::partition::Partition;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("node `{0}` has no ground-truth label")]
    MissingLabel(String),
    #[error("partition is empty")]
    Empty,
}

/// Denominator used to normalize mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    /// `2I / (H(U) + H(V))`
    #[default]
    Arithmetic,
    /// `I / sqrt(H(U) H(V))`
    Sqrt,
    /// `I / min(H(U), H(V))`
    Min,
    /// `I / max(H(U), H(V))`
    Max,
}

impl std::str::FromStr for NmiNormalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "arithmetic" => Ok(Self::Arithmetic),
            "sqrt" | "geometric" => Ok(Self::Sqrt),
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            other => Err(format!("unknown NMI normalization `{other}`")),
        }
    }
}

/// Cluster-by-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[cluster][class]`, classes indexed in sorted label order.
    pub counts: Vec<Vec<u64>>,
    pub classes: Vec<String>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(partition: &Partition, labels: &LabelMap) -> Result<Self, MetricsError> {
        let mut class_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut rows: Vec<Vec<&str>> = Vec::with_capacity(partition.len());
        for cluster in &partition.clusters {
            let mut row = Vec::with_capacity(cluster.len());
            for id in cluster {
                let label = labels
                    .get(id)
                    .ok_or_else(|| MetricsError::MissingLabel(id.to_string()))?;
                class_index.insert(label.as_str(), 0);
                row.push(label.as_str());
            }
            rows.push(row);
        }
        for (i, v) in class_index.values_mut().enumerate() {
            *v = i;
        }
        let mut counts = vec![vec![0u64; class_index.len()]; rows.len()];
        let mut n = 0;
        for (r, row) in rows.iter().enumerate() {
            for label in row {
                counts[r][class_index[label]] += 1;
                n += 1;
            }
        }
        if n == 0 {
            return Err(MetricsError::Empty);
        }
        Ok(ContingencyTable {
            counts,
            classes: class_index.keys().map(|s| s.to_string()).collect(),
            n,
        })
    }

    pub fn cluster_sizes(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn class_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0; self.classes.len()];
        for row in &self.counts {
            for (j, c) in row.iter().enumerate() {
                sizes[j] += c;
            }
        }
        sizes
    }
}

// Terms are summed in sorted order so the result does not depend on how
// clusters or classes happen to be numbered.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn entropy(sizes: &[u64], n: u64) -> f64 {
    let nf = n as f64;
    sorted_sum(
        sizes
            .iter()
            .filter(|&&a| a > 0)
            .map(|&a| (a as f64 / nf) * (nf / a as f64).ln())
            .collect(),
    )
}

fn mutual_information(t: &ContingencyTable, rows: &[u64], cols: &[u64]) -> f64 {
    let nf = t.n as f64;
    let mut terms = Vec::new();
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let ratio = (nf * nij as f64) / (rows[i] as f64 * cols[j] as f64);
            terms.push((nij as f64 / nf) * ratio.ln());
        }
    }
    sorted_sum(terms)
}

/// Normalized mutual information between `partition` and `labels`, in `[0, 1]`.
///
/// If both entropies are zero the value is 1; if exactly one is zero it is 0.
pub fn nmi(
    partition: &Partition,
    labels: &LabelMap,
    normalization: NmiNormalization,
) -> Result<f64, MetricsError> {
    let t = ContingencyTable::new(partition, labels)?;
    let rows = t.cluster_sizes();
    let cols = t.class_sizes();
    let hu = entropy(&rows, t.n);
    let hv = entropy(&cols, t.n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mi = mutual_information(&t, &rows, &cols);
    let denom = match normalization {
        NmiNormalization::Arithmetic => (hu + hv) / 2.0,
        NmiNormalization::Sqrt => (hu * hv).sqrt(),
        NmiNormalization::Min => hu.min(hv),
        NmiNormalization::Max => hu.max(hv),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(k: u64) -> u128 {
    let k = k as u128;
    k * k.saturating_sub(1) / 2
}

/// Fraction of unordered node pairs on which partition and labels agree.
pub fn rand_index(partition: &Partition, labels: &LabelMap) -> Result<f64, MetricsError> {
    let t = ContingencyTable::new(partition, labels)?;
    let total = pairs(t.n);
    if total == 0 {
        return Ok(1.0);
    }
    let together_both: u128 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let together_pred: u128 = t.cluster_sizes().into_iter().map(pairs).sum();
    let together_true: u128 = t.class_sizes().into_iter().map(pairs).sum();
    // agreements = pairs apart in both + pairs together in both
    let agree = total + 2 * together_both - together_pred - together_true;
    Ok(agree as f64 / total as f64)
}

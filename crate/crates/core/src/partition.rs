use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

/// Disjoint clusters of node ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    pub clusters: Vec<Vec<NodeId>>,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<NodeId>>) -> Self {
        Partition { clusters }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Every cluster nonempty and no id listed twice.
    pub fn check_disjoint(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for (i, c) in self.clusters.iter().enumerate() {
            if c.is_empty() {
                return Err(format!("cluster {i} is empty"));
            }
            for id in c {
                if !seen.insert(id) {
                    return Err(format!("node `{id}` appears in more than one cluster"));
                }
            }
        }
        Ok(())
    }

    /// Disjoint, and the union is exactly `ids`.
    pub fn check_covers<'a>(&self, ids: impl IntoIterator<Item = &'a NodeId>) -> Result<(), String> {
        self.check_disjoint()?;
        let mine: HashSet<&NodeId> = self.clusters.iter().flatten().collect();
        let mut expected = 0;
        for id in ids {
            expected += 1;
            if !mine.contains(id) {
                return Err(format!("node `{id}` is not covered"));
            }
        }
        if expected != mine.len() {
            return Err(format!(
                "partition lists {} nodes, expected {expected}",
                mine.len()
            ));
        }
        Ok(())
    }

    /// Canonical form: members sorted, clusters sorted by first member.
    pub fn canonical(&self) -> Partition {
        let mut clusters: Vec<Vec<NodeId>> = self
            .clusters
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.sort();
                c
            })
            .collect();
        clusters.sort();
        Partition { clusters }
    }
}

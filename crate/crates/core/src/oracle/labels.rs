use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    keyed_uniform, MembershipOracle, MembershipQuery, MergeQuery, OracleDecision, OracleError,
};
use crate::graph::{LabelMap, NodeId};

fn label_of<'a>(labels: &'a LabelMap, id: &NodeId) -> Result<&'a str, OracleError> {
    labels
        .get(id)
        .map(String::as_str)
        .ok_or_else(|| OracleError::MissingLabel(id.clone()))
}

/// Most frequent label among `ids`; ties go to the smallest label.
fn majority_label<'a>(labels: &'a LabelMap, ids: &[NodeId]) -> Result<&'a str, OracleError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in ids {
        *counts.entry(label_of(labels, id)?).or_default() += 1;
    }
    // BTreeMap iterates labels ascending; keep the first maximum.
    let mut best: Option<(&str, usize)> = None;
    for (label, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| OracleError::InvalidQuery("no representatives".into()))
}

/// Perfect agent backed by ground-truth labels.
///
/// A candidate is accepted iff its label equals the majority label of the
/// representatives. Two clusters merge iff their majority labels agree.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    labels: Arc<LabelMap>,
}

impl ExactOracle {
    pub fn new(labels: impl Into<Arc<LabelMap>>) -> Self {
        ExactOracle {
            labels: labels.into(),
        }
    }
}

impl MembershipOracle for ExactOracle {
    fn assess_membership(&self, q: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        let majority = majority_label(&self.labels, q.representatives)?;
        Ok((label_of(&self.labels, q.candidate)? == majority).into())
    }

    fn assess_merge(&self, q: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        let a = majority_label(&self.labels, q.representatives_a)?;
        let b = majority_label(&self.labels, q.representatives_b)?;
        Ok((a == b).into())
    }

    fn descriptor(&self) -> String {
        "exact".into()
    }
}

/// Ensemble of unreliable pairwise judges.
///
/// Each representative compares itself with the candidate; the true
/// same-class answer is flipped with probability `p`, drawn from a stream
/// keyed by `(seed, representative, candidate)`. The decision is the strict
/// majority of those votes, and a tied vote counts as No. Merge questions
/// vote over every cross pair of representatives. More representatives mean
/// more independent votes, so accuracy grows with `K`.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    labels: Arc<LabelMap>,
    flip_probability: f64,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(
        labels: impl Into<Arc<LabelMap>>,
        flip_probability: f64,
        seed: u64,
    ) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&flip_probability) {
            return Err(OracleError::Config(format!(
                "flip probability must lie in [0, 1], got {flip_probability}"
            )));
        }
        Ok(NoisyOracle {
            labels: labels.into(),
            flip_probability,
            seed,
        })
    }

    fn vote(&self, tag: &str, a: &NodeId, b: &NodeId) -> Result<bool, OracleError> {
        let same = label_of(&self.labels, a)? == label_of(&self.labels, b)?;
        let flipped = keyed_uniform(self.seed, tag, a.as_str(), b.as_str()) < self.flip_probability;
        Ok(same != flipped)
    }

    fn tally(votes: impl Iterator<Item = Result<bool, OracleError>>) -> Result<OracleDecision, OracleError> {
        let (mut yes, mut no) = (0usize, 0usize);
        for v in votes {
            if v? {
                yes += 1;
            } else {
                no += 1;
            }
        }
        Ok((yes > no).into())
    }
}

impl MembershipOracle for NoisyOracle {
    fn assess_membership(&self, q: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        Self::tally(
            q.representatives
                .iter()
                .map(|r| self.vote("membership", r, q.candidate)),
        )
    }

    fn assess_merge(&self, q: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        Self::tally(q.representatives_a.iter().flat_map(|a| {
            q.representatives_b.iter().map(move |b| {
                // Unordered key keeps merge answers symmetric.
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                self.vote("merge", lo, hi)
            })
        }))
    }

    fn descriptor(&self) -> String {
        format!("noisy(p={},seed={})", self.flip_probability, self.seed)
    }
}

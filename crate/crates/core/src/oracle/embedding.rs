use std::collections::HashMap;
use std::sync::Arc;

use super::{MembershipOracle, MembershipQuery, MergeQuery, OracleDecision, OracleError};
use crate::graph::{compute_edge_weight, EmbeddingRecord, NodeId};

/// Accepts when the mean edge weight to the representatives reaches a
/// threshold. Isolates graph quality from agent reasoning in ablations.
#[derive(Debug, Clone)]
pub struct EmbeddingOracle {
    vectors: Arc<HashMap<NodeId, Vec<f64>>>,
    beta: f64,
    threshold: f64,
}

impl EmbeddingOracle {
    pub fn new(
        vectors: HashMap<NodeId, Vec<f64>>,
        beta: f64,
        threshold: f64,
    ) -> Result<Self, OracleError> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(OracleError::Config(format!("invalid logit scale {beta}")));
        }
        if !threshold.is_finite() {
            return Err(OracleError::Config(format!("invalid threshold {threshold}")));
        }
        Ok(EmbeddingOracle {
            vectors: Arc::new(vectors),
            beta,
            threshold,
        })
    }

    pub fn from_records(
        records: &[EmbeddingRecord],
        beta: f64,
        threshold: f64,
    ) -> Result<Self, OracleError> {
        Self::new(
            records
                .iter()
                .map(|r| (r.id.clone(), r.vector.clone()))
                .collect(),
            beta,
            threshold,
        )
    }

    fn vector(&self, id: &NodeId) -> Result<&[f64], OracleError> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| OracleError::MissingEmbedding(id.clone()))
    }

    fn weight(&self, a: &NodeId, b: &NodeId) -> Result<f64, OracleError> {
        compute_edge_weight(self.vector(a)?, self.vector(b)?, self.beta)
            .map_err(|e| OracleError::InvalidQuery(e.to_string()))
    }

    fn decide(&self, weights: Vec<f64>) -> OracleDecision {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        (mean >= self.threshold).into()
    }
}

impl MembershipOracle for EmbeddingOracle {
    fn assess_membership(&self, q: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        let weights = q
            .representatives
            .iter()
            .map(|r| self.weight(q.candidate, r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.decide(weights))
    }

    fn assess_merge(&self, q: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        let mut weights = Vec::new();
        for a in q.representatives_a {
            for b in q.representatives_b {
                weights.push(self.weight(a, b)?);
            }
        }
        Ok(self.decide(weights))
    }

    fn descriptor(&self) -> String {
        format!("embedding(beta={},threshold={})", self.beta, self.threshold)
    }
}

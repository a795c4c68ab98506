//! Membership oracles: the agents that decide whether a candidate joins a
//! cluster and whether two clusters should be merged.

mod embedding;
mod labels;
mod prompt;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;

pub use embedding::EmbeddingOracle;
pub use labels::{ExactOracle, NoisyOracle};
pub use prompt::{
    build_membership_prompt, build_merge_prompt, parse_conclusion, Prompt, PromptTemplate,
    TemplateSet, CONCLUSION_INSTRUCTION,
};
pub use remote::{AttachmentMode, RemoteConfig, RemoteOracle, RetryPolicy, API_KEY_ENV};

/// Outcome of one assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleDecision {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for OracleDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleDecision::Yes => "yes",
            OracleDecision::No => "no",
            OracleDecision::Unknown => "unknown",
        })
    }
}

impl From<bool> for OracleDecision {
    fn from(b: bool) -> Self {
        if b {
            OracleDecision::Yes
        } else {
            OracleDecision::No
        }
    }
}

/// Should `candidate` join the cluster summarized by `representatives`?
#[derive(Debug, Clone, Copy)]
pub struct MembershipQuery<'a> {
    pub representatives: &'a [NodeId],
    pub candidate: &'a NodeId,
    pub aspect: &'a str,
}

impl MembershipQuery<'_> {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.representatives.is_empty() {
            return Err(OracleError::InvalidQuery("no representatives".into()));
        }
        if self.representatives.contains(self.candidate) {
            return Err(OracleError::InvalidQuery(format!(
                "candidate `{}` is one of the representatives",
                self.candidate
            )));
        }
        Ok(())
    }
}

/// Are the clusters summarized by `representatives_a` and `representatives_b`
/// the same group?
#[derive(Debug, Clone, Copy)]
pub struct MergeQuery<'a> {
    pub representatives_a: &'a [NodeId],
    pub representatives_b: &'a [NodeId],
    pub aspect: &'a str,
}

impl MergeQuery<'_> {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.representatives_a.is_empty() || self.representatives_b.is_empty() {
            return Err(OracleError::InvalidQuery("empty representative list".into()));
        }
        if self
            .representatives_a
            .iter()
            .any(|r| self.representatives_b.contains(r))
        {
            return Err(OracleError::InvalidQuery(
                "representative lists overlap".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("node `{0}` has no label")]
    MissingLabel(NodeId),
    #[error("node `{0}` has no embedding")]
    MissingEmbedding(NodeId),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("oracle endpoint rejected credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("oracle cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// A decision procedure for membership and merge questions.
///
/// Implementations must be deterministic for a fixed configuration: asking
/// the same query twice yields the same decision.
pub trait MembershipOracle: Send + Sync {
    fn assess_membership(&self, query: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError>;

    fn assess_merge(&self, query: &MergeQuery<'_>) -> Result<OracleDecision, OracleError>;

    /// Short human-readable description recorded in run results.
    fn descriptor(&self) -> String;
}

impl<T: MembershipOracle + ?Sized> MembershipOracle for Box<T> {
    fn assess_membership(&self, query: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        (**self).assess_membership(query)
    }

    fn assess_merge(&self, query: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        (**self).assess_merge(query)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<T: MembershipOracle + ?Sized> MembershipOracle for &T {
    fn assess_membership(&self, query: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        (**self).assess_membership(query)
    }

    fn assess_merge(&self, query: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        (**self).assess_merge(query)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<T: MembershipOracle + ?Sized> MembershipOracle for std::sync::Arc<T> {
    fn assess_membership(&self, query: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        (**self).assess_membership(query)
    }

    fn assess_merge(&self, query: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        (**self).assess_merge(query)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

/// Answers every question the same way. Useful as an adversary.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOracle(pub OracleDecision);

impl MembershipOracle for ConstantOracle {
    fn assess_membership(&self, _: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        Ok(self.0)
    }

    fn assess_merge(&self, _: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        Ok(self.0)
    }

    fn descriptor(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// Uniform draw in `[0, 1)` determined by `(seed, tag, a, b)`.
///
/// Hashing the key with SHA-256 gives an independent, platform-stable stream
/// per pair without any shared generator state.
pub(crate) fn keyed_uniform(seed: u64, tag: &str, a: &str, b: &str) -> f64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [tag, a, b] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

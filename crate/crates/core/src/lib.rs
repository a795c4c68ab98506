//! Agent-centric clustering by oracle-guided traversal of a similarity graph.
//!
//! Embeddings become a thresholded relational graph ([`graph`]); clusters
//! grow from high-degree seeds while a [`oracle::MembershipOracle`] decides
//! which frontier nodes belong ([`traversal`]); [`metrics`] scores the result
//! against ground truth, and [`synthetic`] plus [`sweep`] drive the
//! benchmark experiments.

pub mod embedding_io;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod partition;
pub mod sweep;
pub mod synthetic;
pub mod traversal;

pub use graph::{build_graph, EmbeddingRecord, NodeId, RelationalGraph};
pub use oracle::{MembershipOracle, OracleDecision};
pub use par::Execution;
pub use partition::Partition;
pub use traversal::{run_clustering, TraversalConfig, TraversalTrace};

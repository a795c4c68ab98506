//! File formats: line-delimited embeddings, graph documents, dataset
//! manifests and run results.
//!
//! Floats go through `serde_json`, which prints the shortest decimal that
//! parses back to the same `f64`, so every format round-trips bit-exactly.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EmbeddingRecord, GraphError, NodeId, RelationalGraph};
use crate::metrics::NmiNormalization;
use crate::partition::Partition;
use crate::traversal::{MergeStrategy, TraversalTrace};

/// Norm deviation above which ingest logs a warning before re-normalizing.
pub const NORM_WARN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{path}: partition invariant violated: {message}")]
    Partition { path: PathBuf, message: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn input(path: &Path, message: impl Into<String>) -> Self {
        IoError::Input {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// True for failures caused by the content of a file rather than the
    /// filesystem.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}

/// Write `bytes` to a sibling temp file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| IoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable document");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn normalize(vector: &mut [f64]) -> Result<f64, &'static str> {
    if vector.iter().any(|x| !x.is_finite()) {
        return Err("non-finite vector component");
    }
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err("zero vector cannot be normalized");
    }
    for x in vector.iter_mut() {
        *x /= norm;
    }
    Ok(norm)
}

/// Read line-delimited embedding records, normalizing each vector.
pub fn load_embeddings(
    path: &Path,
    expected_dimension: Option<usize>,
) -> Result<Vec<EmbeddingRecord>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut records: Vec<EmbeddingRecord> = Vec::new();
    let mut seen = HashSet::new();
    let mut dimension = expected_dimension;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| IoError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        match dimension {
            Some(d) if d != record.vector.len() => {
                return Err(parse_err(format!(
                    "vector has dimension {}, expected {d}",
                    record.vector.len()
                )))
            }
            None => dimension = Some(record.vector.len()),
            _ => {}
        }
        let norm = normalize(&mut record.vector).map_err(|m| parse_err(m.to_string()))?;
        if (norm - 1.0).abs() > NORM_WARN_TOLERANCE {
            log::warn!(
                "{}:{line_no}: vector for `{}` had norm {norm}; re-normalized",
                path.display(),
                record.id
            );
        }
        if !seen.insert(record.id.clone()) {
            return Err(parse_err(format!("duplicate id `{}`", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_embeddings(records: &[EmbeddingRecord], path: &Path) -> Result<(), IoError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable record");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Serialized form of a [`RelationalGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId, f64)>,
    pub tau: f64,
    pub beta: f64,
}

impl From<&RelationalGraph> for GraphDocument {
    fn from(g: &RelationalGraph) -> Self {
        GraphDocument {
            nodes: g.ids().to_vec(),
            edges: g
                .edges()
                .map(|(a, b, w)| (g.id(a).clone(), g.id(b).clone(), w))
                .collect(),
            tau: g.tau(),
            beta: g.beta(),
        }
    }
}

impl TryFrom<GraphDocument> for RelationalGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDocument) -> Result<Self, GraphError> {
        for (a, b, _) in &doc.edges {
            if a >= b {
                return Err(GraphError::InvalidEdge {
                    a: a.to_string(),
                    b: b.to_string(),
                    reason: "endpoints must be listed in increasing order".into(),
                });
            }
        }
        RelationalGraph::from_parts(doc.nodes, doc.edges, doc.tau, doc.beta)
    }
}

pub fn save_graph(g: &RelationalGraph, path: &Path) -> Result<(), IoError> {
    write_json(&GraphDocument::from(g), path)
}

pub fn load_graph(path: &Path) -> Result<RelationalGraph, IoError> {
    let doc: GraphDocument = read_json(path)?;
    RelationalGraph::try_from(doc).map_err(|e| IoError::input(path, e.to_string()))
}

/// Describes an embeddings file and the user interest it was produced for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub aspect: String,
    pub embeddings_path: PathBuf,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_set: Option<Vec<String>>,
}

impl DatasetManifest {
    /// Check `records` against the declared dimension and label set.
    pub fn validate(&self, records: &[EmbeddingRecord]) -> Result<(), String> {
        for r in records {
            if r.vector.len() != self.dimension {
                return Err(format!(
                    "`{}` has dimension {}, manifest says {}",
                    r.id,
                    r.vector.len(),
                    self.dimension
                ));
            }
            if let (Some(set), Some(label)) = (&self.label_set, &r.label) {
                if !set.contains(label) {
                    return Err(format!("`{}` has label `{label}` outside the label set", r.id));
                }
            }
        }
        Ok(())
    }
}

pub fn save_manifest(m: &DatasetManifest, path: &Path) -> Result<(), IoError> {
    write_json(m, path)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, IoError> {
    read_json(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub nmi: f64,
    pub ri: f64,
    pub normalization: NmiNormalization,
}

/// Parameters a run was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub tau: f64,
    pub beta: f64,
    pub k: usize,
    pub num_candidates: usize,
    pub unknown_retries: usize,
    pub merge_strategy: MergeStrategy,
    pub oracle: String,
    pub seed: u64,
}

/// Everything a clustering run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub partition: Partition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricValues>,
    pub trace: TraversalTrace,
    pub config: ConfigSnapshot,
}

pub fn save_result(result: &RunResult, path: &Path) -> Result<(), IoError> {
    write_json(result, path)
}

/// Load a run result, rejecting documents whose partition is not disjoint.
pub fn load_result(path: &Path) -> Result<RunResult, IoError> {
    let result: RunResult = read_json(path)?;
    result
        .partition
        .check_disjoint()
        .map_err(|message| IoError::Partition {
            path: path.to_path_buf(),
            message,
        })?;
    Ok(result)
}

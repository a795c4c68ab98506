//! Parameter sweeps over the similarity threshold and the number of
//! representatives. Each (value, seed) run is independent and rows are
//! evaluated in parallel when the execution mode allows.

use serde::{Deserialize, Serialize};

use crate::graph::{
    build_graph_with, compute_edge_weight, EmbeddingRecord, GraphError, LabelMap, RelationalGraph,
};
use crate::metrics::{nmi, rand_index, NmiNormalization};
use crate::oracle::{MembershipOracle, OracleError};
use crate::par;
use crate::traversal::{run_clustering, TraversalConfig};

/// Builds the oracle for one seed.
pub type OracleFactory<'a> =
    dyn Fn(u64) -> Result<Box<dyn MembershipOracle>, OracleError> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean; 0 for a single observation.
    pub stderr: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Some(Summary { mean, stderr })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub edge_count: usize,
    pub density: f64,
    pub runs: usize,
    pub nmi: Option<Summary>,
    pub ri: Option<Summary>,
    pub membership_assessments: Option<Summary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.runs == 0)
    }

    /// Tab-separated table, one line per row, empty cells for failed rows.
    pub fn to_table(&self) -> String {
        let cell = |s: Option<Summary>, f: fn(Summary) -> f64| {
            s.map(|s| format!("{:.6}", f(s))).unwrap_or_default()
        };
        let mut out = format!(
            "{}\tedges\tdensity\truns\tnmi\tnmi_se\tri\tri_se\tassessments\tassessments_se\n",
            self.parameter
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.value,
                r.edge_count,
                r.density,
                r.runs,
                cell(r.nmi, |s| s.mean),
                cell(r.nmi, |s| s.stderr),
                cell(r.ri, |s| s.mean),
                cell(r.ri, |s| s.stderr),
                cell(r.membership_assessments, |s| s.mean),
                cell(r.membership_assessments, |s| s.stderr),
            ));
        }
        out
    }
}

/// Everything a sweep row needs besides the graph.
pub struct SweepContext<'a> {
    pub labels: &'a LabelMap,
    pub seeds: &'a [u64],
    pub config: &'a TraversalConfig,
    pub oracle: &'a OracleFactory<'a>,
    pub normalization: NmiNormalization,
}

struct SeedOutcome {
    nmi: f64,
    ri: f64,
    assessments: f64,
}

fn run_seed(
    g: &RelationalGraph,
    ctx: &SweepContext<'_>,
    config: &TraversalConfig,
    seed: u64,
) -> Result<SeedOutcome, String> {
    let oracle = (ctx.oracle)(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    let config = TraversalConfig {
        seed,
        ..config.clone()
    };
    let mut g = g.clone();
    let (partition, trace) =
        run_clustering(&mut g, &*oracle, &config).map_err(|e| format!("seed {seed}: {e}"))?;
    let metric_err = |e| format!("seed {seed}: {e}");
    Ok(SeedOutcome {
        nmi: nmi(&partition, ctx.labels, ctx.normalization).map_err(metric_err)?,
        ri: rand_index(&partition, ctx.labels).map_err(metric_err)?,
        assessments: trace.membership_assessments as f64,
    })
}

fn evaluate_row(
    value: f64,
    g: &RelationalGraph,
    ctx: &SweepContext<'_>,
    config: &TraversalConfig,
) -> SweepRow {
    let outcomes = par::map(config.execution, ctx.seeds, |&seed| {
        run_seed(g, ctx, config, seed)
    });
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => errors.push(e),
        }
    }
    let column = |f: fn(&SeedOutcome) -> f64| Summary::of(&ok.iter().map(f).collect::<Vec<_>>());
    SweepRow {
        value,
        edge_count: g.edge_count(),
        density: g.density(),
        runs: ok.len(),
        nmi: column(|o| o.nmi),
        ri: column(|o| o.ri),
        membership_assessments: column(|o| o.assessments),
        errors,
    }
}

/// Thresholds whose graphs have (approximately) the requested densities.
///
/// For each target `d` the threshold is the weight of the `ceil(d * pairs)`-th
/// strongest pair, so the graph at that threshold keeps at least that many
/// edges (more only when weights tie).
pub fn taus_for_densities(
    records: &[EmbeddingRecord],
    beta: f64,
    densities: &[f64],
    execution: par::Execution,
) -> Result<Vec<f64>, GraphError> {
    if let Some(&d) = densities.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(GraphError::InvalidTau(d));
    }
    if records.len() < 2 {
        return Ok(vec![1.0; densities.len()]);
    }
    let rows: Vec<usize> = (0..records.len()).collect();
    let per_row = par::map(execution, &rows, |&i| {
        records[i + 1..]
            .iter()
            .map(|r| compute_edge_weight(&records[i].vector, &r.vector, beta))
            .collect::<Result<Vec<f64>, GraphError>>()
    });
    let mut weights = Vec::new();
    for row in per_row {
        weights.extend(row?);
    }
    weights.sort_by(|a, b| b.total_cmp(a));
    let pairs = weights.len();
    Ok(densities
        .iter()
        .map(|&d| {
            let keep = (d * pairs as f64).ceil() as usize;
            if keep == 0 {
                1.0
            } else {
                weights[keep.min(pairs) - 1]
            }
        })
        .collect())
}

fn sorted_values(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// One row per threshold: build the graph at `tau`, cluster under every seed.
pub fn sweep_density(
    records: &[EmbeddingRecord],
    taus: &[f64],
    beta: f64,
    ctx: &SweepContext<'_>,
) -> SweepResult {
    let exec = ctx.config.execution;
    let rows = par::map(exec, &sorted_values(taus), |&tau| {
        match build_graph_with(records, beta, tau, exec) {
            Ok(g) => evaluate_row(tau, &g, ctx, ctx.config),
            Err(e) => SweepRow {
                value: tau,
                edge_count: 0,
                density: 0.0,
                runs: 0,
                nmi: None,
                ri: None,
                membership_assessments: None,
                errors: vec![e.to_string()],
            },
        }
    });
    SweepResult {
        parameter: "tau".into(),
        seeds: ctx.seeds.to_vec(),
        rows,
    }
}

/// One row per representative count on a fixed graph.
pub fn sweep_k(g: &RelationalGraph, ks: &[usize], ctx: &SweepContext<'_>) -> SweepResult {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let rows = par::map(ctx.config.execution, &ks, |&k| {
        let config = TraversalConfig {
            k,
            ..ctx.config.clone()
        };
        evaluate_row(k as f64, g, ctx, &config)
    });
    SweepResult {
        parameter: "k".into(),
        seeds: ctx.seeds.to_vec(),
        rows,
    }
}

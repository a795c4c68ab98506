use std::path::{Path, PathBuf};
use std::sync::Arc;

use agentclust::embedding_io::{
    load_embeddings, load_graph, save_embeddings, save_graph, save_manifest, save_result,
    write_atomic, write_json, ConfigSnapshot, MetricValues, RunResult,
};
use agentclust::graph::{labels_of, EmbeddingRecord, LabelMap, RelationalGraph};
use agentclust::metrics::{nmi, rand_index, NmiNormalization};
use agentclust::sweep::{self, SweepContext, SweepResult};
use agentclust::synthetic::{generate_dataset, graph_noise_report, NoiseReport, PlantedSpec};
use agentclust::traversal::{run_clustering, EngineError, StepKind, TraversalConfig, TraversalTrace};
use serde::Serialize;

use crate::error::CliError;
use crate::oracle_args::{OracleArgs, OracleInputs};

fn read_graph(path: &Path) -> Result<RelationalGraph, CliError> {
    load_graph(path).map_err(CliError::reading)
}

fn read_records(path: &Path) -> Result<Vec<EmbeddingRecord>, CliError> {
    load_embeddings(path, None).map_err(CliError::reading)
}

/// The first id of `ids` without a label, if any.
fn first_unlabeled<'a>(
    ids: impl IntoIterator<Item = &'a agentclust::NodeId>,
    labels: &LabelMap,
) -> Option<&'a agentclust::NodeId> {
    ids.into_iter().find(|id| !labels.contains_key(*id))
}

fn print_graph_stats(g: &RelationalGraph) {
    println!("nodes: {}", g.node_count());
    println!("edges: {}", g.edge_count());
    println!("density: {}", g.density());
}

pub fn build_graph(embeddings: &Path, tau: f64, beta: f64, out: &Path) -> Result<(), CliError> {
    let records = read_records(embeddings)?;
    let g = agentclust::build_graph(&records, beta, tau)
        .map_err(|e| CliError::input(format!("{}: {e}", embeddings.display())))?;
    save_graph(&g, out).map_err(CliError::writing)?;
    print_graph_stats(&g);
    Ok(())
}

pub struct ClusterArgs<'a> {
    pub graph: &'a Path,
    pub embeddings: Option<&'a Path>,
    pub oracle: &'a OracleArgs,
    pub config: TraversalConfig,
    pub normalization: NmiNormalization,
    pub out: &'a Path,
}

fn print_trace(trace: &TraversalTrace) {
    println!("membership_assessments: {}", trace.membership_assessments);
    println!("accepts: {}", trace.accepts);
    println!("rejects: {}", trace.rejects);
    println!("unknowns: {}", trace.unknowns);
    println!("edges_removed: {}", trace.edges_removed);
    println!("merge_assessments: {}", trace.merge_assessments);
    println!("merge_unknowns: {}", trace.merge_unknowns);
    println!("merges_performed: {}", trace.merges_performed);
}

fn echo_steps(trace: &TraversalTrace) {
    for s in &trace.steps {
        let kind = match s.kind {
            StepKind::Membership => "membership",
            StepKind::Merge => "merge",
        };
        let reps: Vec<&str> = s.representatives.iter().map(|r| r.as_str()).collect();
        let other: Vec<&str> = s.candidate_representatives.iter().map(|r| r.as_str()).collect();
        eprintln!(
            "step {kind} cluster={} candidate={} reps=[{}] candidate_reps=[{}] -> {}",
            s.cluster,
            s.candidate,
            reps.join(","),
            other.join(","),
            s.decision
        );
    }
}

fn partial_trace_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".partial.json");
    PathBuf::from(name)
}

pub fn cluster(args: ClusterArgs<'_>) -> Result<(), CliError> {
    let mut g = read_graph(args.graph)?;
    let records = args.embeddings.map(read_records).transpose()?;
    let labels = records.as_deref().map(labels_of).map(Arc::new);
    let missing = labels
        .as_deref()
        .map(|l| first_unlabeled(g.ids(), l).cloned());
    if args.oracle.needs_labels() {
        match &missing {
            None => {
                return Err(CliError::input(
                    "this oracle needs labels; pass --labels with a labeled embeddings file",
                ))
            }
            Some(Some(id)) => {
                return Err(CliError::input(format!(
                    "labels required: node `{id}` has no label"
                )))
            }
            Some(None) => {}
        }
    }
    let factory = args.oracle.factory(OracleInputs {
        labels: labels.as_ref(),
        records: records.as_deref(),
        beta: g.beta(),
    })?;
    let oracle = factory(args.config.seed)?;
    let (tau, beta) = (g.tau(), g.beta());
    let (partition, trace) = match run_clustering(&mut g, &*oracle, &args.config) {
        Ok(done) => done,
        Err(e) => {
            if let EngineError::Oracle { trace, .. } = &e {
                let path = partial_trace_path(args.out);
                write_json(trace.as_ref(), &path).map_err(CliError::writing)?;
                eprintln!("partial trace written to {}", path.display());
            }
            return Err(e.into());
        }
    };
    if args.config.log_steps {
        echo_steps(&trace);
    }

    let metrics = match (&labels, &missing) {
        (Some(labels), Some(None)) => {
            let metric_err = |e: agentclust::metrics::MetricsError| CliError::input(e.to_string());
            Some(MetricValues {
                nmi: nmi(&partition, labels, args.normalization).map_err(metric_err)?,
                ri: rand_index(&partition, labels).map_err(metric_err)?,
                normalization: args.normalization,
            })
        }
        _ => None,
    };
    let result = RunResult {
        partition,
        metrics,
        trace,
        config: ConfigSnapshot {
            tau,
            beta,
            k: args.config.k,
            num_candidates: args.config.num_candidates,
            unknown_retries: args.config.unknown_retries,
            merge_strategy: args.config.merge_strategy,
            oracle: oracle.descriptor(),
            seed: args.config.seed,
        },
    };
    save_result(&result, args.out).map_err(CliError::writing)?;

    println!("clusters: {}", result.partition.len());
    if let Some(m) = &result.metrics {
        println!("NMI: {:.4}", m.nmi);
        println!("RI: {:.4}", m.ri);
    }
    print_trace(&result.trace);
    Ok(())
}

fn finish_sweep(result: &SweepResult, out: &Path, table: Option<&Path>) -> Result<(), CliError> {
    write_json(result, out).map_err(CliError::writing)?;
    let text = result.to_table();
    if let Some(path) = table {
        write_atomic(path, text.as_bytes()).map_err(CliError::writing)?;
    }
    print!("{text}");
    for row in &result.rows {
        for e in &row.errors {
            eprintln!("{} = {}: {e}", result.parameter, row.value);
        }
    }
    if result.all_failed() {
        return Err(CliError::NoRows(format!(
            "every {} value failed; see {}",
            result.parameter,
            out.display()
        )));
    }
    Ok(())
}

pub struct DensitySweepArgs<'a> {
    pub embeddings: &'a Path,
    pub taus: &'a [f64],
    pub density_targets: &'a [f64],
    pub beta: f64,
    pub oracle: &'a OracleArgs,
    pub config: TraversalConfig,
    pub normalization: NmiNormalization,
    pub seeds: &'a [u64],
    pub out: &'a Path,
    pub table: Option<&'a Path>,
}

pub fn sweep_density(args: DensitySweepArgs<'_>) -> Result<(), CliError> {
    let records = read_records(args.embeddings)?;
    let labels = labels_of(&records);
    if let Some(id) = first_unlabeled(records.iter().map(|r| &r.id), &labels) {
        return Err(CliError::input(format!(
            "{}: sweeps need labels, `{id}` has none",
            args.embeddings.display()
        )));
    }
    let taus = if args.density_targets.is_empty() {
        args.taus.to_vec()
    } else {
        let taus = sweep::taus_for_densities(
            &records,
            args.beta,
            args.density_targets,
            args.config.execution,
        )
        .map_err(|e| CliError::input(format!("--density-targets: {e}")))?;
        for (d, t) in args.density_targets.iter().zip(&taus) {
            log::info!("density target {d} -> tau {t}");
        }
        taus
    };
    let labels = Arc::new(labels);
    let factory = args.oracle.factory(OracleInputs {
        labels: Some(&labels),
        records: Some(&records),
        beta: args.beta,
    })?;
    args.config.validate()?;
    let ctx = SweepContext {
        labels: &labels,
        seeds: args.seeds,
        config: &args.config,
        oracle: &factory,
        normalization: args.normalization,
    };
    let result = sweep::sweep_density(&records, &taus, args.beta, &ctx);
    finish_sweep(&result, args.out, args.table)
}

pub struct KSweepArgs<'a> {
    pub graph: &'a Path,
    pub labels: &'a Path,
    pub ks: &'a [usize],
    pub oracle: &'a OracleArgs,
    pub config: TraversalConfig,
    pub normalization: NmiNormalization,
    pub seeds: &'a [u64],
    pub out: &'a Path,
    pub table: Option<&'a Path>,
}

pub fn sweep_k(args: KSweepArgs<'_>) -> Result<(), CliError> {
    let g = read_graph(args.graph)?;
    let records = read_records(args.labels)?;
    let labels = labels_of(&records);
    if let Some(id) = first_unlabeled(g.ids(), &labels) {
        return Err(CliError::input(format!(
            "{}: labels required, `{id}` has none",
            args.labels.display()
        )));
    }
    if let Some(&k) = args.ks.iter().find(|&&k| k == 0) {
        return Err(CliError::input(format!("--k-list: k must be at least 1, got {k}")));
    }
    let labels = Arc::new(labels);
    let factory = args.oracle.factory(OracleInputs {
        labels: Some(&labels),
        records: Some(&records),
        beta: g.beta(),
    })?;
    args.config.validate()?;
    let ctx = SweepContext {
        labels: &labels,
        seeds: args.seeds,
        config: &args.config,
        oracle: &factory,
        normalization: args.normalization,
    };
    let result = sweep::sweep_k(&g, args.ks, &ctx);
    finish_sweep(&result, args.out, args.table)
}

pub struct SimulateArgs<'a> {
    pub spec: PlantedSpec,
    pub tau: f64,
    pub beta: f64,
    pub write_graph: bool,
    pub out: &'a Path,
}

/// Noise report together with the graph it describes.
#[derive(Serialize)]
struct NoiseSummary {
    tau: f64,
    beta: f64,
    edge_count: usize,
    density: f64,
    #[serde(flatten)]
    report: NoiseReport,
}

pub fn simulate(args: SimulateArgs<'_>) -> Result<(), CliError> {
    let (records, manifest) =
        generate_dataset(&args.spec).map_err(|e| CliError::input(e.to_string()))?;
    let g = agentclust::build_graph(&records, args.beta, args.tau).map_err(|e| CliError::input(e.to_string()))?;
    let report = graph_noise_report(&g, &labels_of(&records));

    let dir = args.out;
    save_embeddings(&records, &dir.join(&manifest.embeddings_path)).map_err(CliError::writing)?;
    save_manifest(&manifest, &dir.join("manifest.json")).map_err(CliError::writing)?;
    let summary = NoiseSummary {
        tau: g.tau(),
        beta: g.beta(),
        edge_count: g.edge_count(),
        density: g.density(),
        report,
    };
    write_json(&summary, &dir.join("noise_report.json")).map_err(CliError::writing)?;
    if args.write_graph {
        save_graph(&g, &dir.join("graph.json")).map_err(CliError::writing)?;
    }

    println!("dataset: {}", manifest.name);
    print_graph_stats(&g);
    println!("wrong_edge_fraction: {}", summary.report.wrong_edge_fraction);
    println!("missing_intra_pairs: {}", summary.report.missing_intra_pairs);
    Ok(())
}

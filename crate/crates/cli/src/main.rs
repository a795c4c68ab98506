//! `agentclust`: build similarity graphs, cluster them with an oracle, and
//! run the density and representative-count sweeps.

mod commands;
mod error;
mod oracle_args;

use std::path::PathBuf;
use std::process::ExitCode;

use agentclust::graph::{DEFAULT_BETA, DEFAULT_TAU};
use agentclust::metrics::NmiNormalization;
use agentclust::synthetic::DEFAULT_MIN_SEPARATION;
use agentclust::traversal::{MergeStrategy, TraversalConfig};
use clap::{Args, Parser, Subcommand};

use crate::oracle_args::OracleArgs;

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  I/O failure while writing outputs
  2  invalid input: unreadable or malformed files, missing labels, bad flags
  3  the remote oracle rejected the credentials in ORACLE_API_KEY
  4  a sweep produced no successful run";

#[derive(Parser)]
#[command(name = "agentclust", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold pairwise embedding similarities into a graph file.
    BuildGraph {
        /// Line-delimited JSON embeddings.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a graph and write the run result.
    Cluster {
        #[arg(long)]
        graph: PathBuf,
        /// Embeddings file supplying labels and, for the embedding oracle,
        /// vectors.
        #[arg(long, visible_alias = "labels")]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        traversal: TraversalArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the similarity threshold over one labeled dataset.
    SweepDensity {
        #[arg(long)]
        embeddings: PathBuf,
        /// Thresholds to sweep, comma separated.
        #[arg(long, value_delimiter = ',', required_unless_present = "density_targets",
              conflicts_with = "density_targets")]
        tau_list: Vec<f64>,
        /// Target graph densities; each becomes the threshold that keeps
        /// that share of pairs.
        #[arg(long, value_delimiter = ',')]
        density_targets: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        traversal: TraversalArgs,
        /// Run seeds: `0..10` or `1,5,9`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long)]
        out: PathBuf,
        /// Also write the tab-separated table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Sweep the number of representatives on a fixed graph.
    SweepK {
        #[arg(long)]
        graph: PathBuf,
        /// Labeled embeddings file for the graph's nodes.
        #[arg(long, visible_alias = "embeddings")]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        traversal: TraversalArgs,
        #[arg(long, value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Generate a planted-partition dataset with its noise report.
    Simulate {
        #[arg(long)]
        n_nodes: usize,
        #[arg(long)]
        n_classes: usize,
        #[arg(long)]
        dimension: usize,
        #[arg(long)]
        noise_sigma: f64,
        #[arg(long)]
        seed: u64,
        /// Class proportions, comma separated; equal when omitted.
        #[arg(long, value_delimiter = ',')]
        class_balance: Vec<f64>,
        /// Prototypes are resampled until every pairwise dot is below this.
        #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION)]
        min_separation: f64,
        /// Threshold of the graph the noise report describes.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        /// Also write that graph as graph.json.
        #[arg(long)]
        write_graph: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
struct TraversalArgs {
    /// Representatives per cluster in oracle queries.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Frontier nodes assessed per expansion step.
    #[arg(long, default_value_t = 1)]
    num_candidates: usize,
    /// Re-asks of an Unknown answer before it counts as No.
    #[arg(long, default_value_t = 2)]
    unknown_retries: usize,
    #[arg(long, default_value = "ranked")]
    merge_strategy: MergeStrategy,
    /// User interest the oracle judges by.
    #[arg(long, default_value = "category")]
    aspect: String,
    /// NMI normalization: arithmetic, sqrt, min or max.
    #[arg(long, default_value = "arithmetic")]
    normalization: NmiNormalization,
    /// Record every assessment in the trace and echo it to stderr.
    #[arg(long)]
    log_steps: bool,
}

impl TraversalArgs {
    fn config(&self, seed: u64) -> TraversalConfig {
        TraversalConfig {
            k: self.k,
            num_candidates: self.num_candidates,
            unknown_retries: self.unknown_retries,
            seed,
            aspect: self.aspect.clone(),
            merge_strategy: self.merge_strategy,
            log_steps: self.log_steps,
            ..TraversalConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|e| format!("`{t}`: {e}")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(seeds))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::BuildGraph {
            embeddings,
            tau,
            beta,
            out,
        } => commands::build_graph(&embeddings, tau, beta, &out),
        Command::Cluster {
            graph,
            embeddings,
            oracle,
            traversal,
            seed,
            out,
        } => commands::cluster(commands::ClusterArgs {
            graph: &graph,
            embeddings: embeddings.as_deref(),
            oracle: &oracle,
            config: traversal.config(seed),
            normalization: traversal.normalization,
            out: &out,
        }),
        Command::SweepDensity {
            embeddings,
            tau_list,
            density_targets,
            beta,
            oracle,
            traversal,
            seeds,
            out,
            table,
        } => commands::sweep_density(commands::DensitySweepArgs {
            embeddings: &embeddings,
            taus: &tau_list,
            density_targets: &density_targets,
            beta,
            oracle: &oracle,
            config: traversal.config(0),
            normalization: traversal.normalization,
            seeds: &seeds.0,
            out: &out,
            table: table.as_deref(),
        }),
        Command::SweepK {
            graph,
            labels,
            k_list,
            oracle,
            traversal,
            seeds,
            out,
            table,
        } => commands::sweep_k(commands::KSweepArgs {
            graph: &graph,
            labels: &labels,
            ks: &k_list,
            oracle: &oracle,
            config: traversal.config(0),
            normalization: traversal.normalization,
            seeds: &seeds.0,
            out: &out,
            table: table.as_deref(),
        }),
        Command::Simulate {
            n_nodes,
            n_classes,
            dimension,
            noise_sigma,
            seed,
            class_balance,
            min_separation,
            tau,
            beta,
            write_graph,
            out,
        } => commands::simulate(commands::SimulateArgs {
            spec: agentclust::synthetic::PlantedSpec {
                n_nodes,
                n_classes,
                dimension,
                noise_sigma,
                class_balance,
                seed,
                min_prototype_separation: min_separation,
            },
            tau,
            beta,
            write_graph,
            out: &out,
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

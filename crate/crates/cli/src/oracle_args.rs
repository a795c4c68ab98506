use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use agentclust::graph::{EmbeddingRecord, LabelMap};
use agentclust::oracle::{
    AttachmentMode, EmbeddingOracle, ExactOracle, MembershipOracle, NoisyOracle, OracleError,
    RemoteConfig, RemoteOracle, RetryPolicy, TemplateSet,
};
use clap::{Args, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    /// Ground-truth labels, majority of the representatives.
    Exact,
    /// Per-representative label votes, each flipped with probability --p.
    Noisy,
    /// Mean embedding similarity against --threshold.
    Embedding,
    /// Chat-completion endpoint; bearer token from ORACLE_API_KEY.
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub oracle: OracleKind,

    /// Flip probability of each noisy vote (required for --oracle noisy).
    #[arg(long)]
    pub p: Option<f64>,

    /// Acceptance threshold on mean weight (required for --oracle embedding).
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Chat-completion URL (required for --oracle remote).
    #[arg(long)]
    pub endpoint: Option<String>,

    /// Model name sent with every request (required for --oracle remote).
    #[arg(long)]
    pub model: Option<String>,

    /// Decision cache, one JSON record per line.
    #[arg(long)]
    pub cache: Option<PathBuf>,

    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,

    /// Noun used in prompts, e.g. "fruit" or "playing card".
    #[arg(long, default_value = "item")]
    pub subject: String,

    /// Inline `<dir>/<id>.<ext>` images instead of sending ids.
    #[arg(long)]
    pub image_dir: Option<PathBuf>,

    #[arg(long, default_value = "png")]
    pub image_ext: String,

    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,

    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
}

type Factory = Box<dyn Fn(u64) -> Result<Box<dyn MembershipOracle>, OracleError> + Sync>;

/// What an oracle may draw on besides its flags.
pub struct OracleInputs<'a> {
    pub labels: Option<&'a Arc<LabelMap>>,
    pub records: Option<&'a [EmbeddingRecord]>,
    pub beta: f64,
}

impl OracleArgs {
    pub fn needs_labels(&self) -> bool {
        matches!(self.oracle, OracleKind::Exact | OracleKind::Noisy)
    }

    /// Validate the flags and return a constructor keyed by run seed.
    ///
    /// The noisy oracle draws its flips from the seed; the others ignore it.
    /// A remote oracle is built once and shared so runs share one cache.
    pub fn factory(&self, inputs: OracleInputs<'_>) -> Result<Factory, CliError> {
        let labels = || {
            inputs.labels.cloned().ok_or_else(|| {
                CliError::input(format!(
                    "--oracle {} needs labeled embeddings",
                    self.oracle.to_possible_value().expect("named").get_name()
                ))
            })
        };
        match self.oracle {
            OracleKind::Exact => {
                let oracle = ExactOracle::new(labels()?);
                Ok(Box::new(move |_| Ok(Box::new(oracle.clone()))))
            }
            OracleKind::Noisy => {
                let labels = labels()?;
                let p = self
                    .p
                    .ok_or_else(|| CliError::input("--oracle noisy requires --p"))?;
                NoisyOracle::new(labels.clone(), p, 0)?;
                Ok(Box::new(move |seed| {
                    Ok(Box::new(NoisyOracle::new(labels.clone(), p, seed)?))
                }))
            }
            OracleKind::Embedding => {
                let records = inputs
                    .records
                    .ok_or_else(|| CliError::input("--oracle embedding needs --embeddings"))?;
                let threshold = self
                    .threshold
                    .ok_or_else(|| CliError::input("--oracle embedding requires --threshold"))?;
                let oracle = EmbeddingOracle::from_records(records, inputs.beta, threshold)?;
                Ok(Box::new(move |_| Ok(Box::new(oracle.clone()))))
            }
            OracleKind::Remote => {
                let oracle = Arc::new(RemoteOracle::new(self.remote_config()?)?);
                Ok(Box::new(move |_| Ok(Box::new(oracle.clone()))))
            }
        }
    }

    fn remote_config(&self) -> Result<RemoteConfig, CliError> {
        let endpoint = self
            .endpoint
            .as_deref()
            .ok_or_else(|| CliError::input("--oracle remote requires --endpoint"))?;
        let model = self
            .model
            .as_deref()
            .ok_or_else(|| CliError::input("--oracle remote requires --model"))?;
        if self.max_in_flight == 0 {
            return Err(CliError::input("--max-in-flight must be at least 1"));
        }
        let mut config = RemoteConfig::new(endpoint, model);
        config.templates = TemplateSet::for_subject(&self.subject, false, None);
        config.retry = RetryPolicy {
            max_retries: self.max_retries,
            ..RetryPolicy::default()
        };
        config.cache_path = self.cache.clone();
        config.max_in_flight = self.max_in_flight;
        config.timeout = Duration::from_secs(self.timeout_secs);
        if let Some(dir) = &self.image_dir {
            config.attachments = AttachmentMode::Inline {
                dir: dir.clone(),
                extension: self.image_ext.clone(),
            };
        }
        Ok(config)
    }
}

//! `kgsf` command-line front end.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::sync::LazyLock;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use toml::{Table, Value};

pub use config::RunConfig;

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{} (dataset format {}, checkpoint format {})",
        env!("CARGO_PKG_VERSION"),
        kgsf::graph::FORMAT_VERSION,
        kgsf::model::CHECKPOINT_VERSION
    )
});

#[derive(Debug, Parser)]
#[command(name = "kgsf", version = VERSION.as_str(), about = "Scoring-function search and evaluation-protocol lab for knowledge-graph embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate(Options),
    /// Train a scoring function; writes a checkpoint and validation curve.
    Train(Options),
    /// Evaluate one scorer under one protocol.
    Eval(Options),
    /// Random search over scoring functions.
    Search(Options),
    /// Tail-occurrence histograms and concentration summary.
    Analyze(Options),
    /// Evaluate scorers under sampled, typed and full ranking side by side.
    CompareProtocols(Options),
}

impl Command {
    fn options(&self) -> &Options {
        match self {
            Command::Generate(o)
            | Command::Train(o)
            | Command::Eval(o)
            | Command::Search(o)
            | Command::Analyze(o)
            | Command::CompareProtocols(o) => o,
        }
    }
}

#[derive(Debug, Args)]
pub struct Options {
    /// TOML file of config keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Flags,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Every config key as an optional flag. Unset flags leave lower layers alone.
#[derive(Debug, Default, Args, Serialize)]
pub struct Flags {
    /// Dataset directory.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// wikikg2-like, biokg-like or uniform.
    #[arg(long)]
    pub preset: Option<String>,
    /// Full-size model: dim 200, 300k steps, validation every 20k.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub paper_scale: bool,
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub entity_count: Option<usize>,
    #[arg(long)]
    pub relation_count: Option<usize>,
    #[arg(long)]
    pub triple_count: Option<usize>,
    #[arg(long)]
    pub zipf_exponent: Option<f64>,
    #[arg(long)]
    pub typed: Option<bool>,
    #[arg(long)]
    pub type_count: Option<usize>,
    /// train,valid,test
    #[arg(long, value_delimiter = ',')]
    pub split_fractions: Option<Vec<f64>>,

    /// Catalog name or expression, e.g. `transe` or "e0h - e0t + r0".
    #[arg(long)]
    pub sf: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub valid_interval: Option<usize>,
    /// uniform or self_adversarial.
    #[arg(long)]
    pub negative_weighting: Option<String>,
    #[arg(long)]
    pub adversarial_temperature: Option<f64>,
    /// Protocol for validation during training.
    #[arg(long)]
    pub valid_protocol: Option<String>,

    /// sampled:N, typed:N or full.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Unfiltered ranking.
    #[arg(long)]
    #[serde(skip)]
    pub raw: bool,
    /// all or train.
    #[arg(long)]
    pub filter_scope: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    /// entoccur, a checkpoint path, or a scoring function to train.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Comma-separated scorers for compare-protocols.
    #[arg(long, value_delimiter = ',')]
    pub scorers: Option<Vec<String>>,
    #[arg(long)]
    pub eval_negatives: Option<usize>,

    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub num_terms: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Analyze the inverse-augmented graph.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub augment: bool,
}

impl Flags {
    pub fn to_table(&self) -> Table {
        let mut t = match Value::try_from(self).expect("flags serialise") {
            Value::Table(t) => t,
            _ => unreachable!("structs serialise to tables"),
        };
        if self.raw {
            t.insert("filtered".into(), Value::Boolean(false));
        }
        t
    }
}

/// Resolves the configuration of `options`.
pub fn resolve(options: &Options) -> Result<RunConfig> {
    let file = options.config.as_deref().map(config::read_file).transpose()?;
    config::resolve(file.as_ref(), &options.flags.to_table())
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli.command.options())?;
    match &cli.command {
        Command::Generate(_) => commands::generate(&cfg),
        Command::Train(_) => commands::train_cmd(&cfg),
        Command::Eval(_) => commands::eval_cmd(&cfg),
        Command::Search(_) => commands::search_cmd(&cfg),
        Command::Analyze(_) => commands::analyze(&cfg),
        Command::CompareProtocols(_) => commands::compare_protocols(&cfg),
    }
}

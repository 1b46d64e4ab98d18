use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dcc_core::suite::{evaluate_suite, read_suite};
use dcc_core::{compute_coords, load_corpus, mine_dccs, Corpus, NeighborIndex};
use dcc_workbench::clients::scorer_for;
use dcc_workbench::{open_workbench, router, WorkbenchConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "dcc",
    version,
    about = "Find and rewrite data-constrained counterfactuals in NLI data"
)]
struct Cli {
    /// TOML session config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the workbench HTTP service.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        listen: Option<String>,
        /// Draft event log (created if missing).
        #[arg(long)]
        event_log: Option<PathBuf>,
        /// Dashboard assets to serve under `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Print mined DCCs as JSON lines.
    Mine {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print data-map coordinates as JSON lines.
    Datamap {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score an exported suite and print the evaluation report.
    Evaluate {
        #[arg(long)]
        suite: PathBuf,
        /// `mock:<seed>` or a scorer URL.
        #[arg(long)]
        scorer: Option<String>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Prediction log per checkpoint, in training order.
    #[arg(long = "checkpoints", num_args = 1..)]
    checkpoints: Vec<PathBuf>,
}

impl DataArgs {
    fn apply(self, config: &mut WorkbenchConfig) {
        if self.dataset.is_some() {
            config.data.dataset = self.dataset;
        }
        if self.embeddings.is_some() {
            config.data.embeddings = self.embeddings;
        }
        if !self.checkpoints.is_empty() {
            config.data.checkpoints = self.checkpoints;
        }
    }
}

fn load_data(config: &WorkbenchConfig) -> Result<Corpus> {
    let (Some(dataset), Some(embeddings)) = (&config.data.dataset, &config.data.embeddings) else {
        bail!("--dataset and --embeddings are required (or [data] in the config)");
    };
    let corpus = load_corpus(dataset, embeddings, &config.data.checkpoints)?;
    tracing::info!(points = corpus.len(), dim = corpus.dim(), "corpus loaded");
    Ok(corpus)
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();

    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => WorkbenchConfig::load(path)?,
        None => WorkbenchConfig::default(),
    };

    match cli.command {
        Command::Serve {
            data,
            listen,
            event_log,
            static_dir,
        } => {
            data.apply(&mut config);
            if let Some(l) = listen {
                config.server.listen = l;
            }
            if let Some(p) = event_log {
                config.server.event_log = p;
            }
            if static_dir.is_some() {
                config.server.static_dir = static_dir;
            }
            config.validate()?;
            let corpus = load_data(&config)?;
            let listen = config.server.listen.clone();
            let static_dir = config.server.static_dir.clone();
            let workbench = open_workbench(corpus, config)?;
            let app = router(workbench, static_dir.as_deref());
            let listener = tokio::net::TcpListener::bind(&listen)
                .await
                .with_context(|| format!("cannot listen on {listen}"))?;
            tracing::info!(addr = %listener.local_addr()?, "serving");
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
        }
        Command::Mine { data } => {
            data.apply(&mut config);
            let corpus = load_data(&config)?;
            let datamap = compute_coords(&corpus, &config.region)?;
            let index = NeighborIndex::build(&corpus);
            let catalog = mine_dccs(&corpus, &datamap, &index, &config.miner)?;
            tracing::info!(dccs = catalog.len(), "mining done");
            let mut out = io::stdout().lock();
            catalog.write_jsonl(&mut out)?;
            out.flush()?;
        }
        Command::Datamap { data } => {
            data.apply(&mut config);
            let corpus = load_data(&config)?;
            let datamap = compute_coords(&corpus, &config.region)?;
            let mut out = io::stdout().lock();
            datamap.write_jsonl(&mut out)?;
            out.flush()?;
        }
        Command::Evaluate { suite, scorer } => {
            let file =
                File::open(&suite).with_context(|| format!("cannot open {}", suite.display()))?;
            let items = read_suite(BufReader::new(file))?;
            let Some(target) = scorer.or(config.scorers.evaluation.clone()) else {
                bail!("--scorer is required (or scorers.evaluation in the config)");
            };
            let scorer = scorer_for(&target).map_err(anyhow::Error::msg)?;
            let report =
                evaluate_suite(&items, scorer.as_ref(), config.scorers.parallelism).await?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

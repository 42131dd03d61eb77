use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use stcca_cli::commands::{self, Context};
use stcca_cli::{load_dataset, RunConfig};

#[derive(Parser)]
#[command(name = "stcca", version, about = "Sparse tensor CCA with multi-order graph regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Dataset manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Run configuration (TOML); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit on all samples and write projections, embedding and trace.
    Fit(Common),
    /// Repeated split evaluation.
    Evaluate(Common),
    /// Accuracy against the embedding dimension.
    DimSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 6, 8, 10, 12, 14, 16, 18, 20])]
        dims: Vec<usize>,
    },
    /// Accuracy over sparsity weight and graph order.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0])]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5, 6, 7, 8, 9, 10])]
        orders: Vec<usize>,
    },
    /// Accuracy against the fraction of corrupted entries.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])]
        fractions: Vec<f64>,
    },
    /// Write the multi-order affinity matrix of each view.
    GraphExport {
        #[command(flatten)]
        common: Common,
        /// Only this view (zero-based).
        #[arg(long)]
        view: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = match &cli.command {
        Command::Fit(c) | Command::Evaluate(c) => c,
        Command::DimSweep { common, .. }
        | Command::Grid { common, .. }
        | Command::NoiseSweep { common, .. }
        | Command::GraphExport { common, .. } => common,
    };
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    let dataset = load_dataset(&common.manifest)?;
    std::fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("cannot create {}", common.out_dir.display()))?;
    let ctx = Context {
        dataset: &dataset,
        config: &config,
        out_dir: &common.out_dir,
        jobs: common.jobs,
    };
    match &cli.command {
        Command::Fit(_) => commands::fit(&ctx),
        Command::Evaluate(_) => commands::evaluate(&ctx),
        Command::DimSweep { dims, .. } => commands::dim_sweep(&ctx, dims),
        Command::Grid { lambdas, orders, .. } => commands::grid(&ctx, lambdas, orders),
        Command::NoiseSweep { fractions, .. } => commands::noise_sweep(&ctx, fractions),
        Command::GraphExport { view, .. } => commands::graph_export(&ctx, *view),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STCCA_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", msg.join(": "));
            ExitCode::FAILURE
        }
    }
}

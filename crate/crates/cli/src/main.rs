//! Command-line driver: raw-tree evaluation, training, model evaluation,
//! prediction dumps, and sweep tables over the trajectory corpora.

mod run;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical failure.
#[derive(Parser)]
#[command(name = "trajtree", version, about = "Tree-based multi-modal trajectory forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataOpts {
    /// Scene to evaluate: eth, hotel, univ, zara1, zara2, or sdd.
    #[arg(long)]
    scene: String,

    /// Corpus root holding ethucy/<scene>/*.txt and sdd/split.txt.
    /// Falls back to $TRAJTREE_DATA_DIR, then "data".
    #[arg(long)]
    data_dir: Option<std::path::PathBuf>,

    /// Observed steps per window.
    #[arg(long, default_value_t = 8)]
    t_obs: usize,

    /// Future steps per window.
    #[arg(long, default_value_t = 12)]
    horizon: usize,

    /// Window stride over the frame grid.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args, Clone)]
struct TreeOpts {
    /// Tree depth (0 = constant-velocity predictor, default 3).
    #[arg(long)]
    depth: Option<usize>,

    /// Split directions per node (odd, default 3).
    #[arg(long)]
    width: Option<usize>,

    /// Time steps per split segment; defaults to ceil(horizon/depth),
    /// or 1 at depth 0.
    #[arg(long)]
    interval: Option<usize>,

    /// Comma-separated per-level split angles in radians; defaults to the
    /// scene's preset schedule.
    #[arg(long, value_delimiter = ',')]
    angles: Option<Vec<f64>>,

    /// Plain-text tree config file (interval/depth/width/angles/horizon);
    /// explicit flags override its values.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
}

#[derive(Args, Clone)]
struct OutOpts {
    /// Output directory; defaults to runs/<timestamp>-seed<seed>.
    #[arg(long)]
    out: Option<std::path::PathBuf>,

    /// Worker threads for evaluation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct TrainOpts {
    #[arg(long, default_value_t = 200)]
    epochs: usize,

    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    /// Coarse regression loss weight.
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,

    /// Classification loss weight.
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,

    /// Refinement loss weight.
    #[arg(long, default_value_t = 1.0)]
    lambda3: f64,

    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    embed: usize,

    /// Windows per optimizer step.
    #[arg(long, default_value_t = 32)]
    batch_windows: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the training-free raw tree on a scene's test split.
    EvalRaw {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        tree: TreeOpts,
        #[command(flatten)]
        out: OutOpts,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train the scoring/refinement stack on a scene's train split.
    Train {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        tree: TreeOpts,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        out: OutOpts,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Evaluate a trained checkpoint: best-of-K ADE/FDE plus top-K
    /// selection-accuracy tables.
    Eval {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        tree: TreeOpts,
        #[command(flatten)]
        out: OutOpts,
        #[arg(long)]
        checkpoint: std::path::PathBuf,
        /// Hypotheses per agent.
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Dump per-agent top-K trajectories with confidences as JSON lines.
    Predict {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        tree: TreeOpts,
        #[command(flatten)]
        out: OutOpts,
        #[arg(long)]
        checkpoint: std::path::PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Sweep raw-tree settings (depth, width, horizon) or best-of-K with a
    /// checkpoint, one CSV row per setting.
    Ablate {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        out: OutOpts,
        /// What to sweep: depth, width, horizon, or k.
        #[arg(long)]
        sweep: String,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        /// Base width for depth/horizon sweeps.
        #[arg(long, default_value_t = 3)]
        width: usize,
        /// Base depth for width/k sweeps.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 12)]
        horizon_base: usize,
        /// Checkpoint, required for k sweeps.
        #[arg(long)]
        checkpoint: Option<std::path::PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EvalRaw { data, tree, out, seed } => run::eval_raw(data, tree, out, seed),
        Command::Train { data, tree, train, out, seed } => {
            run::train(data, tree, train, out, seed)
        }
        Command::Eval { data, tree, out, checkpoint, k, seed } => {
            run::eval_model(data, tree, out, checkpoint, k, seed)
        }
        Command::Predict { data, tree, out, checkpoint, k, seed } => {
            run::predict(data, tree, out, checkpoint, k, seed)
        }
        Command::Ablate {
            data,
            out,
            sweep,
            values,
            width,
            depth,
            horizon_base,
            checkpoint,
            seed,
        } => run::ablate(data, out, sweep, values, width, depth, horizon_base, checkpoint, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(run::exit_code(&err))
        }
    }
}

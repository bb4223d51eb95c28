use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use sparse_score::config::{help_text, RunConfig};
use sparse_score::experiment::{cmd_audit, cmd_eval, cmd_sample, cmd_sweep, cmd_toy, cmd_train, RunReport};

#[derive(Parser)]
#[command(
    name = "sparse-score",
    version,
    about = "Sparse denoising score matching experiments"
)]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, `key=value`; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root; beats SPARSE_SCORE_OUT and output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for training and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint to load; without it the exact score of the target is used.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a score model and write its checkpoint and logs.
    Train,
    /// Draw samples with the annealed sampler.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid points of the sampler.
        #[arg(long)]
        steps: Option<usize>,
        /// Number of chains.
        #[arg(long)]
        chains: Option<usize>,
        /// Keep full trajectories.
        #[arg(long)]
        record: bool,
    },
    /// Score error, sparsity profiles and sample KL.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Grid over penalty, step count, sparsity level and seed.
    Sweep,
    /// Plain vs penalized training on the anisotropic toy target.
    Toy,
    /// Tilting identity check and bound term report.
    Audit {
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn run(cli: Cli) -> sparse_score::Result<RunReport> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply(s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("train.seed", &seed.to_string())?;
        cfg.set("sampler.seed", &seed.to_string())?;
    }
    let root = cfg.output_root(cli.out.as_deref());
    match cli.command {
        Cmd::Train => cmd_train(&cfg, &root),
        Cmd::Sample {
            model,
            steps,
            chains,
            record,
        } => {
            if let Some(v) = steps {
                cfg.set("sampler.steps", &v.to_string())?;
            }
            if let Some(v) = chains {
                cfg.set("sampler.chains", &v.to_string())?;
            }
            if record {
                cfg.set("sampler.record", "on")?;
            }
            cmd_sample(&cfg, &root, model.checkpoint.as_deref())
        }
        Cmd::Eval { model } => cmd_eval(&cfg, &root, model.checkpoint.as_deref()),
        Cmd::Sweep => cmd_sweep(&cfg, &root),
        Cmd::Toy => cmd_toy(&cfg, &root),
        Cmd::Audit { model } => cmd_audit(&cfg, &root, model.checkpoint.as_deref()),
    }
}

fn main() -> ExitCode {
    // the key registry is appended to --help
    let matches = Cli::command().after_help(help_text()).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(report) => {
            for m in &report.metrics {
                let params = serde_json::to_string(&m.params).unwrap_or_default();
                match m.stderr {
                    Some(se) => println!("{} {params} = {} +- {se}", m.metric, m.value),
                    None => println!("{} {params} = {}", m.metric, m.value),
                }
            }
            if let Some(dir) = report.artifacts.first().and_then(|p| p.parent()) {
                println!("run {} written to {}", report.run_id, dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

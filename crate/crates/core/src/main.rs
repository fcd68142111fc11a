use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graphmix::cli::{cmd_eval, cmd_ingest, cmd_split, cmd_train, format_stats, CliError, RunConfig};
use graphmix::datapipe::Split;

#[derive(Parser)]
#[command(name = "graphmix", version, about = "Multi-task molecular GNN training")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the configured datasets and print label statistics.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute and write dataset splits.
    Split {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write checkpoint, manifest and metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Ingest { config } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", format_stats(&cmd_ingest(&cfg)?));
        }
        Command::Split { config, seed, out } => {
            let cfg = RunConfig::load(&config)?;
            for s in cmd_split(&cfg, seed, out.as_deref())? {
                let counts: Vec<String> = Split::ALL.iter().map(|&x| format!("{x}={}", s.count(x))).collect();
                println!("{}: {}", s.dataset, counts.join(" "));
            }
        }
        Command::Train { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let m = cmd_train(&cfg, &out)?;
            println!("trained {} parameters; manifest hash {}", m.param_count, m.hash);
        }
        Command::Eval { checkpoint, split } => {
            let split = Split::from_name(&split).ok_or_else(|| CliError::Config(format!("unknown split `{split}`")))?;
            print!("{}", cmd_eval(&checkpoint, split)?.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

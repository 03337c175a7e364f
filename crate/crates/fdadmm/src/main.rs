use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdadmm::config::ExperimentConfig;
use fdadmm::{compare, experiment};

/// Distributed ADMM experiments over directed graphs.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the data, graph and initialization seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to `output.dir` of the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step deltas of consensus rounds and objective against the first file.
    Compare {
        #[arg(required = true, num_args = 2..)]
        csv: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => ExperimentConfig::load(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.override_seed(s);
            }
            let outcome = experiment::run_experiment(&cfg, out.as_deref())?;
            println!("{}", experiment::summary(&outcome));
            Ok(())
        }),
        Command::Compare { csv } => compare::compare_files(&csv).map(|c| print!("{}", c.render())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

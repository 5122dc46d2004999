use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perron_cli::config::{self, ConfigError};
use perron_cli::run::{run, EXIT_CHECK_FAILED, EXIT_OK, EXIT_SCHEMA};

#[derive(Parser)]
#[command(name = "perron", version, about = "Run Perron eigentriplet and ergodicity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides output.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides numerics.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print the final verdict.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> Result<config::ExperimentConfig, u8> {
    match config::load(path) {
        Ok(mut cfg) => {
            if seed.is_some() {
                cfg.numerics.seed = seed;
            }
            Ok(cfg)
        }
        Err(e @ ConfigError::Io { .. }) => {
            eprintln!("error: {e}");
            Err(EXIT_CHECK_FAILED as u8)
        }
        Err(e) => {
            eprintln!("schema violation:\n{e}");
            Err(EXIT_SCHEMA as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run { config: path } | Command::Validate { config: path }) = &cli.command;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let cfg = match load(path, cli.seed) {
        Ok(c) => c,
        Err(code) => return ExitCode::from(code),
    };
    match cli.command {
        Command::Validate { .. } => {
            let diagnostics = cfg.validate(&base);
            if diagnostics.is_empty() {
                println!("{}: valid {} config", path.display(), cfg.experiment.name());
                return ExitCode::from(EXIT_OK as u8);
            }
            for d in &diagnostics {
                println!("{d}");
            }
            ExitCode::from(EXIT_SCHEMA as u8)
        }
        Command::Run { .. } => {
            let out = cli
                .out
                .or_else(|| cfg.output.directory.as_ref().map(|d| base.join(d)))
                .unwrap_or_else(|| PathBuf::from("results").join(cfg.experiment.name()));
            match run(&cfg, &base, &out, cli.quiet) {
                Ok(outcome) => {
                    println!("{}", outcome.summary.verdict);
                    ExitCode::from(outcome.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}

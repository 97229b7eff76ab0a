//! Command-line front end: config loading, pipeline orchestration and
//! JSON/CSV artifacts.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{LoadedConfig, RunConfig, SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "loopflow", version, about = "Morse homology of the loop-space heat flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides `threads` in the config.
    #[arg(long, global = true, env = "LOOPFLOW_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Critical points below the level.
    Crit,
    /// One heat-flow trajectory from a random loop.
    Flow,
    /// Connecting orbits between index-adjacent critical points.
    Moduli,
    /// Full pipeline: chain complex and homology.
    Homology,
    /// Invariant suite with a pass/fail report.
    Check,
    /// Admissible perturbation radius and sublevel inclusions.
    Admissible,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Crit => "crit",
            Command::Flow => "flow",
            Command::Moduli => "moduli",
            Command::Homology => "homology",
            Command::Check => "check",
            Command::Admissible => "admissible",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INVARIANT: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error(transparent)]
    Numerical(#[from] loopflow_core::Error),
    #[error("invariant failed: {}", .0.join(", "))]
    Invariant(Vec<String>),
    #[error("i/o: {0:#}")]
    Io(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => exit::USAGE,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Invariant(_) => exit::INVARIANT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Numerical(e) => e.code(),
            CliError::Invariant(_) => "invariant",
        }
    }
}

/// Runs a parsed command line and returns the exit code. Errors are
/// reported on stderr and, when the output directory is known, as
/// `error.json`.
pub fn run(cli: Cli) -> i32 {
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config is required");
        return exit::USAGE;
    };
    let loaded = match config::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit::USAGE;
        }
    };
    let out = cli.out.clone().or_else(|| loaded.config.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| "loopflow-out".into());
    let threads = cli.threads.or(loaded.config.threads);
    let ctx = commands::Context { cfg: &loaded.config, hash: &loaded.hash, out: &out, verbose: cli.verbose };
    let result = with_threads(threads, || commands::dispatch(cli.command, &ctx));
    match result {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "command": cli.command.name(),
                "config_hash": loaded.hash,
                "kind": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{record}");
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(out.join("error.json"), serde_json::to_string_pretty(&record).unwrap_or_default());
            }
            e.exit_code()
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
    }
}

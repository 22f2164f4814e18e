mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "extremal", version, about = "Extremal domains for semilinear overdetermined problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults are used for missing fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// size of the worker pool
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq)]
enum Command {
    /// radial profile φ and its boundary data
    Profile,
    /// mode spectrum α_j and the invertibility verdict
    Modes,
    /// one Dirichlet solve at the configured shape
    Solve,
    /// extremal domain at the configured point, for each ε
    Extremal,
    /// energy and defect landscape over a grid of centers
    Landscape,
    /// the acceptance suite
    Validate,
}

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub verbose: bool,
}

impl Run {
    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Failure reported as JSON on stderr.
pub enum Failure {
    Config(config::ConfigError),
    Core(extremal_core::Error),
    Io(String),
    Validation(usize),
}

impl From<extremal_core::Error> for Failure {
    fn from(e: extremal_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn report(&self) -> (serde_json::Value, u8) {
        match self {
            Failure::Config(e) => (json!({"kind": "config", "pointer": e.pointer, "message": e.message}), 2),
            Failure::Core(e) => (json!({"kind": e.kind(), "message": e.to_string()}), 1),
            Failure::Io(m) => (json!({"kind": "io", "message": m}), 1),
            Failure::Validation(n) => {
                (json!({"kind": "validation", "message": format!("{n} acceptance criteria failed")}), 1)
            }
        }
    }
}

fn load(cli: &Cli) -> Result<Run, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(Failure::Config)?
        }
        None => RunConfig::default(),
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Config(config::ConfigError {
                pointer: "/workers".into(),
                message: "--workers must be positive".into(),
            }));
        }
        cfg.workers = Some(w);
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Run { cfg, out, verbose: cli.verbose })
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let run = load(cli)?;
    if let Some(w) = run.cfg.workers {
        // a second initialization within one process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    std::fs::create_dir_all(&run.out)?;
    match cli.command {
        Command::Profile => commands::profile(&run),
        Command::Modes => commands::modes(&run),
        Command::Solve => commands::solve(&run),
        Command::Extremal => commands::extremal(&run),
        Command::Landscape => commands::landscape(&run),
        Command::Validate => commands::validate(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (body, code) = f.report();
            eprintln!("{}", json!({ "error": body }));
            ExitCode::from(code)
        }
    }
}

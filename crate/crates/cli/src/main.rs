//! `dpgwave`: run one experiment family and write its CSV tables.
//!
//! Exit status is 0 when every grid point solved, 2 when some points failed
//! (their rows hold `nan`) and 1 on configuration or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use dpg_waveguide::experiments::{run_to_dir, Experiment, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "dpgwave", version, about = "DPG waveguide experiments: pollution, anisotropy, adaptivity, partitioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; missing sections and keys take the defaults below.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for CSV tables and manifest.json.
    #[arg(long, global = true, value_name = "DIR", default_value = "results")]
    out: PathBuf,

    /// Worker threads for independent grid points (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Seed recorded in the manifest; overrides the config value.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Error and power loss against guide length for several orders.
    Pollution,
    /// Refinement along the guide only, with an isotropic control.
    Aniso,
    /// Residual-driven adaptivity on the multi-mode slab.
    Adapt,
    /// Load-balance replay of an adaptive run.
    Partition,
    /// Uniform h-refinement at fixed length.
    Convergence,
    /// Discrete inf-sup constant under refinement.
    Stability,
}

impl Command {
    fn experiment(&self) -> Experiment {
        match self {
            Command::Pollution => Experiment::Pollution,
            Command::Aniso => Experiment::Aniso,
            Command::Adapt => Experiment::Adapt,
            Command::Partition => Experiment::Partition,
            Command::Convergence => Experiment::Convergence,
            Command::Stability => Experiment::Stability,
        }
    }
}

fn parse() -> Cli {
    let defaults = ExperimentConfig::default().to_toml().unwrap_or_default();
    let cmd = Cli::command().after_long_help(format!("Default configuration:\n\n{defaults}"));
    let matches = cmd.get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn main() -> ExitCode {
    let cli = parse();
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("dpgwave: {e}");
                return ExitCode::from(1);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("dpgwave: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("dpgwave: {e}");
            return ExitCode::from(1);
        }
    }
    let experiment = cli.command.experiment();
    match run_to_dir(experiment, &cfg, &cli.out) {
        Ok(m) => {
            println!(
                "{}: {} rows, {} failed, {} files in {} ({:.1}s)",
                experiment.name(),
                m.rows,
                m.failed_rows,
                m.files.len(),
                cli.out.display(),
                m.wall_time
            );
            if m.failed_rows > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("dpgwave: {e}");
            ExitCode::from(1)
        }
    }
}

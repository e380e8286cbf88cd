use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latcb::harness::{run, ExperimentConfig, ExperimentKind, RunOptions};
use latcb::Error;

#[derive(Parser)]
#[command(name = "latcb", version, about = "Atomistic and Cauchy-Born lattice experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for `<name>.csv` and `<name>.report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Lattice stability constant and instability probe.
    Stability(Common),
    /// Phonon dispersion over the Brillouin zone.
    Dispersion(Common),
    /// Atomistic versus Cauchy-Born stress convergence.
    StressConsistency(Common),
    /// Static convergence sweep.
    StaticConverge(Common),
    /// Dynamic convergence sweep.
    DynamicConverge(Common),
    /// Growth of a seeded perturbation on a stable or unstable chain.
    InstabilityDemo(Common),
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::Stability(c) => (ExperimentKind::Stability, c),
            Command::Dispersion(c) => (ExperimentKind::Dispersion, c),
            Command::StressConsistency(c) => (ExperimentKind::StressConsistency, c),
            Command::StaticConverge(c) => (ExperimentKind::StaticConverge, c),
            Command::DynamicConverge(c) => (ExperimentKind::DynamicConverge, c),
            Command::InstabilityDemo(c) => (ExperimentKind::InstabilityDemo, c),
        }
    }
}

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("latcb: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "latcb: {}: config declares kind '{}' but subcommand is '{kind}'",
            args.config.display(),
            cfg.kind
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    let opts = RunOptions {
        out_dir: args.out,
        workers: args.workers,
        seed: args.seed,
    };
    match run(&cfg, &opts) {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!(
                    "{} {} = {:.6e} in [{:e}, {:e}]",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.band[0],
                    c.band[1]
                );
            }
            for p in outcome.csv_path.iter().chain(&outcome.report_path) {
                println!("wrote {}", p.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ACCEPTANCE)
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("latcb: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("latcb: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

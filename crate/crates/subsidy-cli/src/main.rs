//! `subsidy` — batch front end for the ecosystem-subsidy game toolkit.
//!
//! Exit codes: 0 success, 1 self-check failure, 2 configuration error,
//! 3 non-convergence, 4 I/O error, 5 internal or numerical error.
//! Set `SUBSIDY_LOG=quiet` to silence the progress lines on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subsidy_core::config::{parse_config_as, JobKind};
use subsidy_core::job::run_job;
use subsidy_core::Error;

#[derive(Parser)]
#[command(name = "subsidy", version, about = "Solve, simulate and analyse the two-firm ecosystem-subsidy game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Markov perfect equilibrium.
    Solve(JobArgs),
    /// Simulate seeded share paths under the solved equilibrium.
    Simulate(JobArgs),
    /// One-period incumbent deviation experiment at the steady state.
    Deviation(JobArgs),
    /// One-parameter bifurcation sweep.
    Sweep(JobArgs),
    /// Two-parameter regime map.
    Region(JobArgs),
    /// Welfare geometry and dynamic efficiency accounting.
    Welfare(JobArgs),
    /// Two-type separating-signal analysis.
    Signal(JobArgs),
    /// Run the built-in invariant suites on the shipped presets.
    Check(CheckArgs),
}

#[derive(Args)]
struct JobArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Optional TOML configuration file (validated before the checks run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "check-output")]
    out: PathBuf,
}

fn quiet() -> bool {
    std::env::var("SUBSIDY_LOG").is_ok_and(|v| v.eq_ignore_ascii_case("quiet"))
}

fn run(kind: JobKind, config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<(), Error> {
    let text = match config {
        Some(path) => std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config_as(&text, Some(kind))?;
    if let Some(seed) = seed {
        cfg.simulation.seed = seed;
    }
    cfg.output_dir = Some(out.display().to_string());
    let manifest = run_job(&cfg, &out)?;
    if !quiet() {
        for job in &manifest.jobs {
            eprintln!("{}: {} ({} files, {:.2}s)", job.kind.name(), job.status, manifest.files.len(), manifest.wall_clock_seconds);
            if let Some(d) = &job.detail {
                eprintln!("  {d}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => run(JobKind::Solve, Some(a.config), a.out, a.seed),
        Command::Simulate(a) => run(JobKind::Simulate, Some(a.config), a.out, a.seed),
        Command::Deviation(a) => run(JobKind::Deviation, Some(a.config), a.out, a.seed),
        Command::Sweep(a) => run(JobKind::Sweep, Some(a.config), a.out, a.seed),
        Command::Region(a) => run(JobKind::Region, Some(a.config), a.out, a.seed),
        Command::Welfare(a) => run(JobKind::Welfare, Some(a.config), a.out, a.seed),
        Command::Signal(a) => run(JobKind::Signal, Some(a.config), a.out, a.seed),
        Command::Check(a) => run(JobKind::Check, a.config, a.out, None),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

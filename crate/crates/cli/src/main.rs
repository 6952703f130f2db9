use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use grokedge::experiments::{run_experiment, Experiment, Overrides, RunReport};
use grokedge::Error;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "grokedge", version, about = "Grokking near the edge of linear separability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Training trajectories over a lambda grid
    Dynamics(RunArgs),
    /// Separability, margin and limiting accuracy statistics over lambda
    LambdaSweep(RunArgs),
    /// Grokking time over a lambda x sigma grid
    GrokHeatmap(RunArgs),
    /// Monte Carlo separable fraction against the exact probability
    Wendel(RunArgs),
    /// Two-point model trajectories and the grokking-time regression
    Toy(RunArgs),
    /// Histograms of sample projections onto the limiting direction
    ProjectionHist(RunArgs),
    /// Two-Gaussians, quantile-label and alternative-distribution runs
    Extensions(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; results go to <out>/<experiment>/
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Override the base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// Print the default config and exit
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Dynamics(a) => (Experiment::Dynamics, a),
            Command::LambdaSweep(a) => (Experiment::LambdaSweep, a),
            Command::GrokHeatmap(a) => (Experiment::GrokHeatmap, a),
            Command::Wendel(a) => (Experiment::Wendel, a),
            Command::Toy(a) => (Experiment::Toy, a),
            Command::ProjectionHist(a) => (Experiment::ProjectionHist, a),
            Command::Extensions(a) => (Experiment::Extensions, a),
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidParameter(_) | Error::DimensionMismatch { .. }) => EXIT_CONFIG,
        Some(Error::Io(_)) | None => 1,
        Some(_) => EXIT_NUMERICAL,
    }
}

fn execute(experiment: Experiment, args: RunArgs) -> anyhow::Result<RunReport> {
    let text = match &args.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let overrides = Overrides {
        seed: args.seed,
        workers: args.workers,
    };
    let report = run_experiment(experiment, text.as_deref(), &args.out, &overrides)
        .with_context(|| format!("{experiment} failed"))?;
    Ok(report)
}

fn main() -> ExitCode {
    let (experiment, args) = Cli::parse().command.split();
    if args.print_config {
        // a closed pipe (e.g. `| head`) is not an error here
        let _ = writeln!(std::io::stdout().lock(), "{}", experiment.default_config());
        return ExitCode::SUCCESS;
    }
    match execute(experiment, args) {
        Ok(report) => {
            println!(
                "{}: {} cells written to {}",
                report.experiment,
                report.cells,
                report.dir.display()
            );
            if report.failures > 0 {
                println!("{} per-seed failures recorded in the summary", report.failures);
            }
            if report.aborted.is_empty() {
                return ExitCode::SUCCESS;
            }
            for (cell, reason) in &report.aborted {
                eprintln!("numerical abort in {cell}: {reason}");
            }
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

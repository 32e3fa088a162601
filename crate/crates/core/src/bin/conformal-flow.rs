use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conformal_flow::cli::{self, Theorem};
use conformal_flow::verify;

/// Conformal metric flows on the circle.
///
/// Relative output paths resolve against $CONFLOW_OUTPUT_ROOT when set.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run { config: PathBuf },
    /// Run a property suite.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Perimeter-minimizing SL(2) representative of an alpha = 1 metric.
    Normalize {
        metric: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the convex curve of an alpha = 1 metric.
    Reconstruct {
        metric: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an alpha = 1 metric to a convex polygon.
    Ingest {
        polygon: PathBuf,
        #[arg(long, default_value_t = 256)]
        resample: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a sharp inequality on a field.
    Inequality { theorem: TheoremArg, field: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out_dir = |out: Option<PathBuf>| out.map_or_else(cli::output_root, |p| cli::output_root().join(p));
    let code = match args.command {
        Command::Run { config } => cli::cmd_run(&config),
        Command::Verify { suite, seed } => verify::cmd_verify(&suite, seed),
        Command::Normalize { metric, out } => cli::cmd_normalize(&metric, &out_dir(out)),
        Command::Reconstruct { metric, out } => cli::cmd_reconstruct(&metric, &out_dir(out)),
        Command::Ingest { polygon, resample, out } => cli::cmd_ingest(&polygon, resample, &out_dir(out)),
        Command::Inequality { theorem, field } => {
            let which = match theorem {
                TheoremArg::A => Theorem::A,
                TheoremArg::B => Theorem::B,
            };
            cli::cmd_inequality(which, &field)
        }
    };
    ExitCode::from(code as u8)
}

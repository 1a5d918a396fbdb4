use clap::{Args, Parser};
use greensolve_cli::{run, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "greensolve", version, about = "Green-operator experiments on the unit ball")]
enum Cli {
    /// Build the kernel matrix (and cache it) and check its basic properties.
    Assemble(Common),
    /// Solve with a bounded or integrable potential.
    Solve(Common),
    /// Cutoff ladder with concentration-mass extraction.
    Csola(Common),
    /// Z-set equivalence suite.
    Ztest(Common),
    /// Indicator and near-support scaling probes.
    Scaling(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let (sub, args) = match Cli::parse() {
        Cli::Assemble(a) => (Subcommand::Assemble, a),
        Cli::Solve(a) => (Subcommand::Solve, a),
        Cli::Csola(a) => (Subcommand::Csola, a),
        Cli::Ztest(a) => (Subcommand::Ztest, a),
        Cli::Scaling(a) => (Subcommand::Scaling, a),
    };
    match run(sub, &args.config, args.seed, args.cache_dir.as_deref()) {
        Ok(w) => {
            eprintln!("report: {}", w.report.display());
            for t in &w.tables {
                eprintln!("table: {}", t.display());
            }
            if w.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("diagnostic failed; see the report");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

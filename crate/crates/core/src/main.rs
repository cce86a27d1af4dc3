use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vfv::cli::{norms_report, run, RunError};
use vfv::config::{parse_config_with, Experiment};

#[derive(Parser)]
#[command(name = "vfv", version, about = "Viscosity finite volume experiments for the isentropic Euler system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March one initial state to the final time.
    Solve(RunArgs),
    /// Statistical error E1 against sample counts.
    #[command(name = "mc-e1")]
    McE1(RunArgs),
    /// Statistical error E2 of Cesàro averages over the mesh ladder.
    #[command(name = "mc-e2")]
    McE2(RunArgs),
    /// Total error over (h, N) pairs against a fine reference.
    #[command(name = "total-error")]
    TotalError(RunArgs),
    /// Weak-form consistency defects over mesh refinements.
    Consistency(RunArgs),
    /// L^q and dual Sobolev norms of a field dump.
    Norms(NormArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set scheme.t_final=0.25`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `run.out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NormArgs {
    /// EFLD1 field file.
    field: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    q: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    ell: Vec<u32>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_experiment(kind: Experiment, args: RunArgs) -> Result<(), (Option<PathBuf>, RunError)> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| (args.out.clone(), e.into()))?,
        None => String::new(),
    };
    let mut overrides = vec![format!("run.experiment={}", kind.name())];
    if let Some(out) = &args.out {
        overrides.push(format!("run.out={}", out.display()));
    }
    overrides.extend(args.set.iter().cloned());
    let cfg = parse_config_with(&text, &overrides).map_err(|e| (args.out.clone(), e.into()))?;
    let summary = run(&cfg).map_err(|e| (Some(cfg.out.clone()), e))?;
    eprintln!("wrote {} artifacts to {}", summary.artifacts.len(), summary.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => run_experiment(Experiment::Solve, a),
        Command::McE1(a) => run_experiment(Experiment::McE1, a),
        Command::McE2(a) => run_experiment(Experiment::McE2, a),
        Command::TotalError(a) => run_experiment(Experiment::TotalError, a),
        Command::Consistency(a) => run_experiment(Experiment::Consistency, a),
        Command::Norms(a) => norms_report(&a.field, &a.q, &a.ell)
            .and_then(|table| match &a.out {
                Some(path) => fs::write(path, table).map_err(RunError::from),
                None => {
                    print!("{table}");
                    Ok(())
                }
            })
            .map_err(|e| (None, e)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((dir, err)) => {
            let record = err.record();
            if let Some(dir) = dir {
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = fs::write(dir.join("error.json"), &record);
                }
            }
            eprint!("{record}");
            ExitCode::FAILURE
        }
    }
}

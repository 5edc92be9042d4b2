//! `oqscp`: batch runner for the open-quantum-system laboratory.

mod config;
mod experiments;
mod output;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "oqscp", version, about = "Weak-coupling open-system experiments from TOML configs")]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// One of transpose-demo, build-generator, evolve, cp-check, factorize,
    /// pair-dynamics, oracle-compare.
    #[arg(required = true)]
    experiment: Option<String>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Configuration file; may name a preset to start from.
    #[arg(long, required = true)]
    config: Option<PathBuf>,
    /// Output directory for result.json and series.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Checks a configuration without running it.
    Validate { path: PathBuf },
    /// Prints the named presets.
    Presets,
}

fn thread_count(jobs: Option<usize>) -> Option<usize> {
    let cap = std::env::var("OQSCP_NUM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    match (jobs.filter(|&n| n > 0), cap) {
        (Some(j), Some(c)) => Some(j.min(c)),
        (j, c) => j.or(c),
    }
}

fn report_diagnostics(diags: &[config::Diagnostic]) -> ExitCode {
    for d in diags {
        eprintln!("error: {d}");
    }
    ExitCode::from(EXIT_INVALID)
}

fn validate(path: &PathBuf) -> ExitCode {
    let loaded = match config::load(path) {
        Ok(l) => l,
        Err(d) => return report_diagnostics(&d),
    };
    let Some(name) = loaded.raw.experiment.clone() else {
        let d = config::Diagnostic {
            field: "experiment".into(),
            line: None,
            message: format!("is required for validation; expected one of {}", config::EXPERIMENTS.join(", ")),
        };
        return report_diagnostics(&[d]);
    };
    match resolve::resolve(&loaded, &name, None) {
        Ok(_) => {
            println!("{}: ok", path.display());
            ExitCode::SUCCESS
        }
        Err(d) => report_diagnostics(&d),
    }
}

fn run(experiment: &str, args: &RunArgs) -> ExitCode {
    let path = args.config.as_ref().expect("required by clap");
    let loaded = match config::load(path) {
        Ok(l) => l,
        Err(d) => return report_diagnostics(&d),
    };
    let cfg = match resolve::resolve(&loaded, experiment, args.seed) {
        Ok(c) => c,
        Err(d) => return report_diagnostics(&d),
    };
    if let Some(n) = thread_count(args.jobs) {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let start = std::time::Instant::now();
    let outcome = match experiments::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: numerical failure in {}: {}", e.module, e.source);
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let elapsed = start.elapsed();
    match output::write(&args.out, &outcome, experiment, elapsed) {
        Ok(files) => {
            if !args.quiet {
                println!("{}", serde_json::to_string_pretty(&outcome.result["result"]).expect("serializable"));
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: cannot write results to {}: {e}", args.out.display());
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match (&cli.command, &cli.experiment) {
        (Some(Command::Validate { path }), _) => validate(path),
        (Some(Command::Presets), _) => {
            for (name, source) in config::PRESETS {
                println!("# preset `{name}`\n{source}");
            }
            ExitCode::SUCCESS
        }
        (None, Some(experiment)) => run(experiment, &cli.run),
        (None, None) => unreachable!("clap requires an experiment"),
    }
}

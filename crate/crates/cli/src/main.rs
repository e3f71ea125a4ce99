//! `mcsort` — train, apply, and evaluate multiple-criteria sorting models.
//!
//! Exit codes: 0 success, 2 data/usage errors, 3 infeasible training data,
//! 4 refused guard (configuration too large to run exactly).

use clap::Parser;

use mcsort_cli::args::{Cli, Command};
use mcsort_cli::commands;

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // A second build_global in-process is harmless; ignore it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Train(args) => commands::train::run(&args),
        Command::Predict(args) => commands::predict::run(&args),
        Command::Evaluate(args) => commands::evaluate::run(&args),
        Command::Ttest(args) => commands::ttest::run(&args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

//! Experiment harness for the `mmhdc` library: seeded multi-run training with
//! the published defaults, model evaluation and dimension sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod stats;

use std::fs;

use args::{Cli, Command};
use config::ExperimentConfig;
use error::{CliError, CliResult};
use experiment::RunRecord;

fn report_run(r: &RunRecord) {
    eprintln!(
        "run {} (seed {}): final test accuracy {:.4} in {:.1}s",
        r.run, r.seed, r.final_test_acc, r.wall_time_s
    );
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => {
            let config = ExperimentConfig::resolve(args::layered(a.config.as_ref(), a.flags)?)?;
            let outcome = experiment::train(&config, report_run)?;
            let s = &outcome.summary.final_spread;
            println!(
                "{:?} {:?}: mean final test accuracy {:.4} (p5 {:.4}, p95 {:.4}) over {} runs -> {}",
                config.method,
                config.dataset,
                s.mean,
                s.p5,
                s.p95,
                outcome.runs.len(),
                config.out.display()
            );
        }
        Command::SweepDim(a) => {
            let config = ExperimentConfig::resolve(args::layered(a.config.as_ref(), a.flags)?)?;
            let sweep = experiment::sweep_dim(&config, &a.dims, |dim, r| {
                eprint!("D={dim}: ");
                report_run(r);
            })?;
            for (dim, outcome) in sweep {
                let s = &outcome.summary.final_spread;
                println!(
                    "D={dim}: mean final test accuracy {:.4} (p5 {:.4}, p95 {:.4})",
                    s.mean, s.p5, s.p95
                );
            }
        }
        Command::Eval(a) => {
            let report = eval::eval_command(&a.model, a.dataset, a.data_dir.as_deref(), a.split, a.seed, a.limit)?;
            println!("accuracy {:.4} on {} samples", report.accuracy, report.samples);
            println!("confusion (rows: true class, columns: predicted)");
            for (c, row) in report.confusion.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|n| format!("{n:>6}")).collect();
                println!("{c:>3} {}", cells.join(""));
            }
            if let Some(path) = a.out {
                fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(CliError::io(path))?;
            }
        }
    }
    Ok(())
}

//! Command-line front end of `stabsim`.

pub mod args;
pub mod commands;

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use args::{Cli, Command};

/// Bad input from the user; the binary exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<stabsim::Error>(),
                Some(stabsim::Error::InvalidArgument(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_file(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_out(Some(p), text),
        None => Ok(()),
    }
}

/// Runs a parsed command line inside a pool of `cli.workers` threads.
pub fn run(cli: Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(UsageError("--workers must be >= 1".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| dispatch(&cli.command, cli.workers))
}

fn dispatch(command: &Command, workers: usize) -> Result<()> {
    match command {
        Command::Synth(a) => write_out(a.out.as_deref(), &commands::synth(a)?),
        Command::SimulateStability(a) => {
            let out = commands::simulate_stability(a)?;
            if a.out_csv.is_none() && a.out_json.is_none() {
                write_out(None, &out.csv)?;
            }
            write_file(a.out_csv.as_deref(), &out.csv)?;
            write_file(a.out_json.as_deref(), &out.json)
        }
        Command::Calibrate(a) => {
            let out = commands::calibrate(a)?;
            eprint!("{}", out.summary);
            if a.out_json.is_none() {
                write_out(None, &out.json)?;
            }
            write_file(a.out_json.as_deref(), &out.json)?;
            write_file(a.out_csv.as_deref(), &out.csv)
        }
        Command::TheoremCheck(a) => write_out(None, &commands::theorem(a)?.1),
        Command::RealStability(a) => {
            let out = commands::real_stability(a)?;
            eprintln!("real_runs={}", out.real_runs);
            write_out(a.out_csv.as_deref(), &out.csv)
        }
        Command::Bench(a) => {
            let rows = commands::bench(a, workers)?;
            write_out(a.out_csv.as_deref(), &commands::bench_csv(&rows))
        }
        Command::NtargetScan(a) => write_out(a.out_csv.as_deref(), &commands::ntarget_scan(a)?.1),
    }
}

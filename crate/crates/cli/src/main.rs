//! `dubins-sim`: run, sweep and compare closed-loop scenarios.
//!
//! Exit status: 0 on success, 1 when a run aborted or output could not be
//! written, 2 when a configuration is invalid.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dubins_core::emit::{compare_string, emit_run, emit_sweep, write_file};
use dubins_core::scenario::ScenarioConfig;
use dubins_core::sim::run_scenario;
use dubins_core::sweep::run_sweep;
use dubins_core::Error;

const OUT_ENV: &str = "DUBINS_OUT_DIR";

#[derive(Parser)]
#[command(name = "dubins-sim", version, about = "Dubins car tracking and obstacle bypass simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV series and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Run seeded variants of a scenario and write aggregate statistics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Run two scenarios and report metric deltas (b − a).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
}

enum Failure {
    Aborted(String),
    Runtime(Error),
    Config(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    // an unreadable config file is a configuration problem, not a run failure
    ScenarioConfig::load(path).map_err(Failure::Config)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let result = run_scenario(&cfg)?;
            print_paths(&emit_run(&result, &out, "run")?);
            if let Some(reason) = result.aborted {
                return Err(Failure::Aborted(reason));
            }
            Ok(())
        }
        Command::Sweep {
            config,
            runs,
            seed,
            out,
        } => {
            let cfg = load(&config)?;
            if runs == 0 {
                return Err(Failure::Config(Error::Config("--runs must be at least 1".into())));
            }
            let report = run_sweep(&cfg, runs, seed)?;
            print_paths(&emit_sweep(&report, &out)?);
            println!(
                "{} runs, {} aborted, {} with safety violations",
                report.runs.len(),
                report.aborted,
                report.safety_violations
            );
            if report.aborted > 0 {
                return Err(Failure::Aborted(format!("{} of {} runs aborted", report.aborted, report.runs.len())));
            }
            Ok(())
        }
        Command::Compare { a, b, out } => {
            let (cfg_a, cfg_b) = (load(&a)?, load(&b)?);
            let (ra, rb) = (run_scenario(&cfg_a)?, run_scenario(&cfg_b)?);
            let mut paths = emit_run(&ra, &out, "a")?;
            paths.extend(emit_run(&rb, &out, "b")?);
            let cmp = out.join("compare.csv");
            let text = compare_string(&ra, &rb);
            write_file(&cmp, &text)?;
            paths.push(cmp);
            print_paths(&paths);
            print!("{text}");
            let aborted: Vec<String> = [&ra, &rb].iter().filter_map(|r| r.aborted.clone()).collect();
            if !aborted.is_empty() {
                return Err(Failure::Aborted(aborted.join("; ")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Aborted(reason)) => {
            eprintln!("run aborted: {reason}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
    }
}

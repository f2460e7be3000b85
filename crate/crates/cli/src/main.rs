//! `tailqr`: fit, predict, benchmark, sweep and evaluate extreme conditional
//! quantile models from the command line.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 I/O error. Failures print `{"error": {...}}` on stderr.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bundle;
mod error;
mod evaluate;
mod fit;
mod run;
mod settings;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::run::RunDir;
use crate::settings::Settings;

const REAL_DATA_TAUS: [f64; 3] = [0.991, 0.995, 0.999];

#[derive(Parser)]
#[command(
    name = "tailqr",
    version,
    about = "Extreme conditional quantile regression in high dimensions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a training CSV and write a model bundle
    Fit(Opts),
    /// Predict extreme quantiles for every row of a CSV
    Predict(Opts),
    /// Monte Carlo comparison on a simulated case
    Benchmark(Opts),
    /// Sensitivity of the estimator to one k-rule parameter
    Sweep(Opts),
    /// Repeated random train/test splits of a real data set
    Evaluate(Opts),
}

#[derive(clap::Args)]
struct Opts {
    /// Flat TOML file with any of the settings below; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Predict(_) => "predict",
            Command::Benchmark(_) => "benchmark",
            Command::Sweep(_) => "sweep",
            Command::Evaluate(_) => "evaluate",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Fit(o)
            | Command::Predict(o)
            | Command::Benchmark(o)
            | Command::Sweep(o)
            | Command::Evaluate(o) => o,
        }
    }
}

fn resolve(cmd: &Command) -> CliResult<Settings> {
    let opts = cmd.opts();
    let base = match &opts.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let mut s = base.overlay(&opts.settings).with_defaults();
    match cmd {
        Command::Fit(_) if s.method.as_deref() == Some(&[tailqr::sim::bench::Method::Hqr]) => {
            s.tau.get_or_insert_with(|| REAL_DATA_TAUS.to_vec());
        }
        Command::Predict(_) | Command::Evaluate(_) => {
            s.tau.get_or_insert_with(|| REAL_DATA_TAUS.to_vec());
        }
        Command::Benchmark(_) | Command::Sweep(_) => {
            s.case.get_or_insert(1);
            s.n.get_or_insert(1000);
            s.reuse_lambda.get_or_insert(true);
            let cfg = simulate::simulation_config(&s)?;
            s.p.get_or_insert(cfg.p);
            s.reps.get_or_insert(cfg.n_reps);
            s.n_eval.get_or_insert(cfg.n_eval);
            s.tau.get_or_insert(cfg.taus);
        }
        _ => {}
    }
    if s.workers == Some(0) {
        return Err(CliError::validation("workers must be positive"));
    }
    Ok(s)
}

fn execute(cmd: &Command) -> CliResult<(RunDir, CliResult<()>)> {
    let s = resolve(cmd)?;
    let mut run = RunDir::create(s.out.as_deref().unwrap_or("runs".as_ref()), cmd.name())?;
    run::init_logging(&run)?;
    run.write("config.toml", &s.to_toml())?;
    if let Some(path) = &cmd.opts().config {
        let raw = std::fs::read_to_string(path)?;
        run.write("config.input.toml", &raw)?;
    }
    log::info!("run directory {}", run.path.display());
    let result = tailqr::exec::with_workers(s.workers, || match cmd {
        Command::Fit(_) => fit::cmd_fit(&s, &mut run),
        Command::Predict(_) => fit::cmd_predict(&s, &mut run),
        Command::Benchmark(_) => simulate::cmd_benchmark(&s, &mut run),
        Command::Sweep(_) => simulate::cmd_sweep(&s, &mut run),
        Command::Evaluate(_) => evaluate::cmd_evaluate(&s, &mut run),
    });
    Ok((run, result))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, result) = match execute(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}", e.to_json());
            return ExitCode::from(e.kind.exit_code() as u8);
        }
    };
    let mut run = run;
    let status = match &result {
        Ok(()) => "ok",
        Err(_) => "failed",
    };
    if let Err(e) = &result {
        log::error!("{e}");
        let _ = run.write("error.json", &(e.to_json() + "\n"));
        eprintln!("{}", e.to_json());
    }
    println!(
        "{}",
        serde_json::json!({
            "status": status,
            "run_dir": run.path,
            "artifacts": run.artifacts(),
        })
    );
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.kind.exit_code() as u8),
    }
}

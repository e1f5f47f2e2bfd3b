//! `mcboost` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcboost::{Error, ErrorKind};

use commands::*;

/// Multicalibration boosting: simulate data, fit initial predictors,
/// calibrate, evaluate, and reproduce the experiment tables.
///
/// Exit status: 0 success, 2 configuration or usage error, 3 data error,
/// 1 internal error. Models and reports are written atomically.
#[derive(Parser)]
#[command(name = "mcboost", version)]
struct Cli {
    /// JSON config; `{"<subcommand>": {...}}` sections fill options not given as flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More logging (-v info, -vv debug with per-iteration trace lines).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset with its truth column.
    Simulate(SimulateArgs),
    /// Fit an initial predictor (ols, forest, qrf) and write it as JSON.
    Fit(FitArgs),
    /// Run multicalibration boosting; writes the model and the trace.
    Calibrate(CalibrateArgs),
    /// Per-group, per-cell, and global metrics of a calibrated model.
    Evaluate(EvaluateArgs),
    /// Metrics under a covariate shift or structural subgroup.
    ShiftEval(ShiftEvalArgs),
    /// One-shot group quantile correction.
    Batchgcp(BatchGcpArgs),
    /// Grid-snapped iterative quantile calibration.
    Multimvp(MultiMvpArgs),
    /// Emit the data table behind a figure (1-7).
    Reproduce(ReproduceArgs),
}

fn dispatch(cli: Cli) -> mcboost::Result<()> {
    let cfg = cli.config.as_deref().map(config::load_config).transpose()?;
    let sec = |name: &str| config::section(&cfg, name);
    macro_rules! go {
        ($args:expr, $name:literal, $f:expr) => {{
            let s = sec($name)?;
            $f(config::merge($args, s.as_ref(), $name)?)
        }};
    }
    match cli.command {
        Command::Simulate(a) => go!(a, "simulate", simulate),
        Command::Fit(a) => go!(a, "fit", fit),
        Command::Calibrate(a) => go!(a, "calibrate", calibrate),
        Command::Evaluate(a) => go!(a, "evaluate", evaluate),
        Command::ShiftEval(a) => go!(a, "shift-eval", shift_eval),
        Command::Batchgcp(a) => go!(a, "batchgcp", batchgcp),
        Command::Multimvp(a) => go!(a, "multimvp", multimvp),
        Command::Reproduce(a) => go!(a, "reproduce", reproduce_cmd),
    }
}

fn set_threads(n: Option<usize>) -> mcboost::Result<()> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(Error::config("threads", "must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the parallel feature; --threads {n} ignored");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = set_threads(cli.threads).and_then(|_| dispatch(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Internal => 1,
            })
        }
    }
}

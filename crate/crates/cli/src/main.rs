use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jch_cli::config::{Experiment, RunConfig};
use jch_cli::{execute, RunError};

/// Finite-temperature phase-transition sweeps of a coupled-cavity lattice.
///
/// Writes `<experiment>.csv` and `<experiment>.summary.json` to the output
/// directory. Exit status: 0 success, 1 config error, 2 numeric failure.
#[derive(Parser)]
#[command(name = "qpt", version)]
struct Cli {
    experiment: Experiment,

    /// Flat `key = value` file; `#` starts a comment.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one key; applied after the config file, in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, env = "QPT_OUT_DIR", default_value = ".")]
    out: PathBuf,

    /// Worker threads for the grid evaluation (results do not depend on it).
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qpt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, RunError> {
    let cfg = RunConfig::load(cli.experiment, cli.config.as_deref(), &cli.set)?;
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.into())
            .build_global()
            .map_err(|e| RunError::Numeric(format!("thread pool: {e}")))?;
    }
    let report = execute(&cfg, &cli.out)?;
    eprintln!(
        "qpt: {} rows -> {} ({})",
        report.rows,
        report.csv.display(),
        if report.cache_hit { "cache hit" } else { "computed" }
    );
    if report.numeric_trouble() {
        eprintln!(
            "qpt: {} NaN rows, {} failed evaluations; see {}",
            report.nan_points,
            report.failed_evaluations,
            report.summary.display()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

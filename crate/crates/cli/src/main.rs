use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dcopt::experiment::{self, ExperimentConfig, ExperimentError, RunOptions};
use dcopt::io::{rate_plot_data, read_trace, write_rate_plot};

const EXIT_CONFIG: u8 = 2;
const EXIT_NAN: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dcopt",
    version,
    about = "Preconditioned DC algorithms with line-search extrapolation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, tolerance) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent solver runs.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a trace CSV into convergence-plot data.
    RatePlot {
        trace: PathBuf,
        /// Destination file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed,
        } => run(config, out, workers, seed),
        Command::RatePlot { trace, out } => match rate_plot(trace, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, workers: usize, seed: Option<u64>) -> ExitCode {
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let opts = RunOptions {
        out_dir: out,
        workers: Some(workers),
        seed,
    };
    match experiment::run(&cfg, &opts) {
        Ok(summary) => {
            let mut stdout = io::stdout().lock();
            for c in &summary.report.cells {
                let _ = writeln!(
                    stdout,
                    "{:<20} {:<11} {:>9e} {:>8} {:>8}",
                    c.algorithm, c.termination, c.tolerance, c.iter_display, c.time_display
                );
            }
            let _ = writeln!(
                stdout,
                "report: {}",
                summary.out_dir.join("report.json").display()
            );
            if summary.nan_cells > 0 {
                eprintln!("{} cell(s) aborted on a NaN energy", summary.nan_cells);
                ExitCode::from(EXIT_NAN)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(ExperimentError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(ExperimentError::Output(e)) => {
            eprintln!("error writing results: {e}");
            ExitCode::FAILURE
        }
    }
}

fn rate_plot(trace: PathBuf, out: Option<PathBuf>) -> anyhow::Result<()> {
    let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
    let (meta, rows) =
        read_trace(BufReader::new(file)).with_context(|| format!("reading {}", trace.display()))?;
    let points = rate_plot_data(&meta, &rows);
    if points.iter().any(|p| p.warning) {
        log::warn!(
            "{} did not converge; rows carry the warning flag",
            trace.display()
        );
    }
    match out {
        Some(path) => write_rate_plot(BufWriter::new(File::create(&path)?), &points)?,
        None => write_rate_plot(io::stdout().lock(), &points)?,
    }
    Ok(())
}

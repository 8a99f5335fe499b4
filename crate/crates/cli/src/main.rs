//! `cmc`: verification suites, solves, plots and bubble decomposition.
//!
//! Exit codes: 0 success, 1 a check or solve failed, 2 usage or input error.
//! `CMC_THREADS` caps the worker pool.

mod plot;
mod report;
mod run;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmc_core::curvature::{make_model, ModelKind};
use cmc_core::decompose::ExtractOptions;

use report::{usage, Failure};

#[derive(Parser)]
#[command(name = "cmc", version, about = "Bubbles, curvature corrections and blow-up diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a check suite and print its JSON report.
    Verify {
        #[arg(value_enum)]
        suite: verify::Suite,
        /// Metric model JSON for the identities suite (default: flat).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the suite's data table (CSV) here, for `cmc plot`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Newton solve or drift sweep described by a JSON config.
    Solve { config: PathBuf },
    /// Render a results table as SVG.
    Plot {
        results: PathBuf,
        #[arg(long, value_enum)]
        kind: plot::Kind,
        /// Defaults to the results path with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract bubbles from a field snapshot (raw little-endian f64 plus a
    /// JSON sidecar with the same stem).
    Decompose {
        field: PathBuf,
        #[arg(long, default_value_t = ExtractOptions::default().defect_threshold)]
        threshold: f64,
        #[arg(long, default_value_t = ExtractOptions::default().max_bubbles)]
        max_bubbles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CMC_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| usage(format!("CMC_THREADS: not a count: `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("CMC_THREADS: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    threads()?;
    match cli.command {
        Command::Verify { suite, model, out, data } => {
            let kind = match &model {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    run::parse_json::<ModelKind>(&text, "model")?
                }
                None => ModelKind::Flat,
            };
            let model = make_model(kind).map_err(|e| usage(format!("model: {e}")))?;
            let outcome = verify::run(suite, &model);
            let text = serde_json::to_string_pretty(&outcome.report).unwrap();
            println!("{text}");
            if let Some(p) = out {
                write_text(&p, &text)?;
            }
            match (data, &outcome.table) {
                (Some(p), Some(t)) => write_text(&p, t)?,
                (Some(_), None) => return Err(usage(format!("suite {} has no data table", suite.name()))),
                _ => {}
            }
            if outcome.report.pass {
                Ok(())
            } else {
                Err(Failure::Check(format!("suite {} failed", suite.name())))
            }
        }
        Command::Solve { config } => {
            let manifest = run::solve(&config)?;
            println!("{manifest}");
            Ok(())
        }
        Command::Plot { results, kind, out } => {
            let out = out.unwrap_or_else(|| results.with_extension("svg"));
            plot::plot(&results, kind, &out)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Decompose { field, threshold, max_bubbles, out } => {
            let opts = ExtractOptions { defect_threshold: threshold, max_bubbles, ..ExtractOptions::default() };
            let result = run::decompose(&field, &opts)?;
            let text = serde_json::to_string_pretty(&result).unwrap();
            println!("{text}");
            if let Some(p) = out {
                write_text(&p, &text)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cmc: {f}");
            ExitCode::from(f.code())
        }
    }
}

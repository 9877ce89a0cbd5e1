//! The `serket` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::error::ExperimentError;
use crate::experiment::{run_exp1_file, run_exp2_file, ExperimentConfig, ExperimentReport};
use crate::synth::{generate_dataset, generate_world, write_dataset, GenSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "serket", version, about = "Connected probabilistic modules: data generation and experiments")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Object and motion concepts: independent MLDAs vs. an integrated hierarchy.
    Exp1(RunArgs),
    /// Concepts and language model: one-shot vs. mutual learning.
    Exp2(RunArgs),
    /// Print a report as tables.
    Eval {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML with `[exp1]` / `[exp2]` tables; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn config(path: Option<&Path>) -> Result<ExperimentConfig, ExperimentError> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), ExperimentError> {
    match command {
        Command::Gen { spec, seed, out } => {
            let spec = GenSpec::from_toml(&read(&spec)?)?;
            let world = generate_world(&spec.world, seed)?;
            let records = generate_dataset(&world, spec.records_per_category, seed)?;
            write_dataset(&records, &out)?;
            let _ = writeln!(stdout, "wrote {} records to {}", records.len(), out.display());
        }
        Command::Exp1(a) => {
            let cfg = config(a.config.as_deref())?;
            let report = ExperimentReport::Exp1(run_exp1_file(&a.data, &cfg.exp1, a.seed)?);
            write(&a.report, &report.to_json())?;
            let _ = write!(stdout, "{}", report.render_text());
        }
        Command::Exp2(a) => {
            let cfg = config(a.config.as_deref())?;
            let report = ExperimentReport::Exp2(run_exp2_file(&a.data, &cfg.exp2, a.seed)?);
            write(&a.report, &report.to_json())?;
            let _ = write!(stdout, "{}", report.render_text());
        }
        Command::Eval { report } => {
            let report = ExperimentReport::from_json(&read(&report)?)?;
            let _ = write!(stdout, "{}", report.render_text());
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

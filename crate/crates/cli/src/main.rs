//! `gapcheck` — variational gap diagnostics from the command line.

mod config;
mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{KeyTable, RunConfig};
use pipelines::{CliError, FigureKind, OutputFormats, Pipeline};

const EXIT_CODE_HELP: &str = "Exit codes:
  0  success
  1  internal numerical failure
  2  configuration error (syntax, types, invalid parameters)
  3  oracle unavailable for the requested pipeline
  4  I/O error
  5  divergence detected during fit

Config files hold flat dotted keys, one `key = value` per line
(e.g. model.kind, model.s, estimator.k); `--set key=value` overrides
the file and `--seed` overrides both.";

#[derive(Parser)]
#[command(
    name = "gapcheck",
    version,
    about = "Estimate the variational gap of likelihood-ratio estimators and its dispersion bounds",
    after_help = EXIT_CODE_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file with flat dotted keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set model.s=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory for reports and figures.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Comma-separated subset of csv,json,svg.
    #[arg(long, value_name = "LIST")]
    formats: Option<String>,

    /// RNG seed; wins over the config file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the gap and evaluate every dispersion bound (report.json).
    Diagnose(CommonArgs),
    /// Bias/variance sweep over the K grid with common random numbers (sweep.csv).
    SweepK(CommonArgs),
    /// Compare iid, antithetic and stratified couplings at fixed K (couple.csv).
    CoupleCompare(CommonArgs),
    /// Gradient-ascend the proposal parameters, tracing gap and dispersion (trace.csv).
    Fit(CommonArgs),
    /// Emit figures (fig_concentration.svg, or fig_majorizer.svg with --majorizer).
    Figures {
        #[command(flatten)]
        common: CommonArgs,
        /// Draw the tangent-majorizer construction instead of the scatter.
        #[arg(long)]
        majorizer: bool,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut table = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
            KeyTable::parse_file(&text, &path.display().to_string())?
        }
        None => KeyTable::default(),
    };
    for assignment in &common.set {
        table.apply_override(assignment)?;
    }
    if let Some(seed) = common.seed {
        table.set("seed", seed.to_string(), "--seed");
    }
    Ok(RunConfig::from_table(&table)?)
}

fn dispatch(pipeline: Pipeline, common: &CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let formats = match &common.formats {
        Some(spec) => OutputFormats::parse(spec)?,
        None => OutputFormats::all(),
    };
    pipelines::run(pipeline, &cfg, &common.out, formats)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pipeline, common) = match &cli.command {
        Command::Diagnose(c) => (Pipeline::Diagnose, c),
        Command::SweepK(c) => (Pipeline::SweepK, c),
        Command::CoupleCompare(c) => (Pipeline::CoupleCompare, c),
        Command::Fit(c) => (Pipeline::Fit, c),
        Command::Figures { common, majorizer } => (
            Pipeline::Figures(if *majorizer {
                FigureKind::Majorizer
            } else {
                FigureKind::Concentration
            }),
            common,
        ),
    };
    match dispatch(pipeline, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

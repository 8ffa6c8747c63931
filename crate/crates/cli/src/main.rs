//! `hkit`: command-line harness for injective-set experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod io;
mod workspace;

use workspace::Workspace;

pub const EXIT_NEGATIVE: u8 = 1;
pub const EXIT_COMPUTE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or malformed input.
    Usage(String),
    /// The computation itself failed.
    Compute(String),
    Io(String),
}

impl From<hkit_core::Error> for CliError {
    fn from(e: hkit_core::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

/// Result of a command: a JSON report and whether the verdict was positive.
pub struct Outcome {
    pub report: serde_json::Value,
    pub positive: bool,
}

#[derive(Parser, Debug)]
#[command(name = "hkit", version, about = "Injective subsets of max-norm space: checks, retractions, reconstructions")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Convergence tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,

    /// Cone offset factor, in (0, 1/8).
    #[arg(long, global = true, default_value_t = 1.0 / 16.0)]
    pub alpha: f64,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Sweep cap per fixed-point run.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub max_iter: usize,

    /// Largest shrinkage stage.
    #[arg(long, global = true, default_value_t = 1 << 14)]
    pub k_max: u64,

    /// Coordinate order of one sweep, e.g. `2,0,1`.
    #[arg(long, global = true, value_parser = io::parse_order)]
    pub order: Option<io::Order>,

    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a distance matrix.
    CheckMetric { file: PathBuf },

    /// Kuratowski embedding and extremality checks on a finite metric space.
    Hull {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        base: usize,
        /// JSON array of function values to test.
        #[arg(long)]
        function: Option<PathBuf>,
        /// Extremalize the supplied function.
        #[arg(long, requires = "function")]
        extremalize: bool,
    },

    /// Retract a point onto an inequality system.
    Retract {
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = io::parse_list)]
        point: io::NumList,
        /// Use the shrinkage schedule even when the bounds are contractive.
        #[arg(long)]
        schedule: bool,
        /// Residual trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },

    /// Assemble an inequality system from samples and outside probes.
    Characterize {
        samples: PathBuf,
        probes: PathBuf,
        /// Where to write the assembled system.
        #[arg(long)]
        out: PathBuf,
        /// Per-probe cone records as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
    },

    /// Injectivity of the kernel of a linear functional.
    Hyperplane {
        #[arg(long, allow_hyphen_values = true, value_parser = io::parse_list)]
        coeffs: io::NumList,
        /// Point off the kernel to pin with the witness family.
        #[arg(long, allow_hyphen_values = true, value_parser = io::parse_list)]
        witness: Option<io::NumList>,
    },

    /// Write a seeded random instance.
    Generate {
        kind: Kind,
        /// Dimension, or number of points for metrics.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Lipschitz constant for cone-envelope systems.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long = "as", value_enum, default_value_t = Form::System)]
        form: Form,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    MetricShortestPath,
    Box,
    Slab,
    ConeEnvelopeSystem,
    Functional,
}

/// Output form for box and slab instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Form {
    System,
    Samples,
    Probes,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let ws = Workspace::new(&cli.global)?;
    let outcome = match cli.command {
        Command::CheckMetric { file } => commands::check_metric(&ws, &file)?,
        Command::Hull { file, base, function, extremalize } => {
            commands::hull(&ws, &file, base, function.as_deref(), extremalize)?
        }
        Command::Retract { system, point, schedule, trace } => {
            commands::retract(&ws, &system, point.0, schedule, trace.as_deref())?
        }
        Command::Characterize { samples, probes, out, records } => {
            commands::characterize(&ws, &samples, &probes, &out, records.as_deref())?
        }
        Command::Hyperplane { coeffs, witness } => commands::hyperplane(&ws, coeffs.0, witness.map(|w| w.0))?,
        Command::Generate { kind, dim, lambda, form, out } => {
            commands::generate(&ws, kind, dim, lambda, form, out.as_deref())?
        }
    };
    if let Some(path) = &ws.report {
        io::write_json(path, &outcome.report)?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(o) => {
            match serde_json::to_string_pretty(&o.report) {
                Ok(text) => {
                    use std::io::Write;
                    // a closed pipe is not an error of ours
                    let _ = writeln!(std::io::stdout().lock(), "{text}");
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_COMPUTE);
                }
            }
            if o.positive {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NEGATIVE)
            }
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Compute(m)) | Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_COMPUTE)
        }
    }
}

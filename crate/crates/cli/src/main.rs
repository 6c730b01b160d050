use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod demo;

/// Default entry budget for single builds; plateau searches use the
/// library default instead.
const BUILD_BUDGET: usize = 5_000_000;

#[derive(Parser)]
#[command(name = "psrkit", version, about = "System-dynamics matrices, linear dimension and linear PSRs")]
struct Cli {
    /// Relative pivot tolerance for numerical rank. For experimentation only.
    #[arg(long, env = "PSRKIT_TOL", global = true, default_value_t = psrkit::RANK_TOL)]
    tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Depths {
    /// Longest history (row) length.
    #[arg(long, default_value_t = 4, value_parser = positive)]
    hist_depth: usize,
    /// Longest test (column) length.
    #[arg(long, default_value_t = 4, value_parser = positive)]
    test_depth: usize,
    /// Largest matrix to build, in entries [default: 200000 with --plateau, 5000000 otherwise].
    #[arg(long, value_parser = positive)]
    budget: Option<usize>,
}

impl Depths {
    fn budget(&self) -> usize {
        self.budget.unwrap_or(BUILD_BUDGET)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DemoName {
    FloatReset,
    RotateRegister,
    Fig6,
    Theorem1,
    Theorem2,
}

/// Models are JSON files or bundled systems: `@float-reset`, `@fig6`,
/// `@rotate-register:K`.
#[derive(Subcommand)]
enum Command {
    /// Numerical rank of the truncated system-dynamics matrix.
    Rank {
        model: String,
        #[command(flatten)]
        depths: Depths,
        /// Deepen both depths until the rank stops changing.
        #[arg(long)]
        plateau: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Derive a linear PSR from a POMDP or a matrix CSV.
    Derive {
        /// Model file, bundled system, or matrix CSV (needs --actions and --observations).
        input: String,
        /// Where to write the PSR JSON.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated core tests to use instead of searching (POMDP input only).
        #[arg(long, value_delimiter = ',')]
        core_tests: Option<Vec<String>>,
        /// Comma-separated action symbols, for CSV input.
        #[arg(long, value_delimiter = ',')]
        actions: Option<Vec<String>>,
        /// Comma-separated observation symbols, for CSV input.
        #[arg(long, value_delimiter = ',')]
        observations: Option<Vec<String>>,
        #[command(flatten)]
        depths: Depths,
    },
    /// Compare two models' predictions.
    Compare {
        model_a: String,
        model_b: String,
        #[command(flatten)]
        depths: Depths,
        /// Compare exhaustively when there are at most this many pairs, else sample this many.
        #[arg(long, default_value_t = 10_000, value_parser = positive)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run a bundled demonstration.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Check range, normalization and consistency of every matrix row.
    Validate {
        model: String,
        #[command(flatten)]
        depths: Depths,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Write the truncated system-dynamics matrix as CSV.
    ExportMatrix {
        model: String,
        #[command(flatten)]
        depths: Depths,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// Failures, by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad file, schema or argument.
    Input(String),
    /// A matrix would exceed the entry budget.
    Budget(String),
    /// Derivation could not produce a valid PSR.
    Derivation(String),
    /// A check or comparison failed; the report is already printed.
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Derivation(_) => 4,
            Failure::Check(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Budget(m) | Failure::Derivation(m) | Failure::Check(m) => m,
        }
    }
}

impl From<psrkit::Error> for Failure {
    fn from(e: psrkit::Error) -> Self {
        use psrkit::Error;
        match e {
            Error::SpanViolation { .. } | Error::InvalidOverride(_) | Error::DepthInsufficient(_) => {
                Failure::Derivation(e.to_string())
            }
            Error::BudgetExhausted { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tol = cli.tol;
    let result = match cli.command {
        Command::Rank {
            model,
            depths,
            plateau,
            format,
        } => commands::rank(&model, depths, plateau, format, tol),
        Command::Derive {
            input,
            out,
            core_tests,
            actions,
            observations,
            depths,
        } => commands::derive(&input, &out, core_tests, actions, observations, depths),
        Command::Compare {
            model_a,
            model_b,
            depths,
            samples,
            seed,
            format,
        } => commands::compare(&model_a, &model_b, depths, samples, seed, format),
        Command::Demo { name, seed, format } => demo::run(name, seed, format, tol),
        Command::Validate { model, depths, format } => commands::validate(&model, depths, format),
        Command::ExportMatrix { model, depths, out } => commands::export_matrix(&model, depths, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

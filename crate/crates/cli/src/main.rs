use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mipdmn::training::Precision;
use mipdmn::DmnError;

mod commands;
mod config;
mod manifest;

#[derive(Debug, Parser)]
#[command(name = "dmn", version, about = "Parametric deep material networks: data, training, prediction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Global {
    /// JSON config document for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the config document.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Training precision (f32 or f64).
    #[arg(long, global = true)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a teacher-labelled dataset.
    GenData,
    /// Train a parametric network on a dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Error quantiles of a model per parameter point and split.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Effective stiffness, conductivity and CTE over a vf sweep.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Nonlinear response along a macroscopic strain path.
    Simulate {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Load path CSV; replaces the path of the config document.
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Identify phase constants and vf from an effective stiffness.
    Identify {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Architecture, parameter counts and active nodes of a model.
    Info { model: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numerical,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::Config => "ConfigError",
            Category::Data => "DataError",
            Category::Numerical => "NumericalError",
        }
    }

    fn code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { category: Category::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { category: Category::Data, message: message.into() }
    }
}

impl From<DmnError> for CliError {
    fn from(e: DmnError) -> Self {
        let category = match e {
            DmnError::Config(_) | DmnError::EmptySampling(_) | DmnError::DegenerateBase(_) | DmnError::NoAnchors => {
                Category::Config
            }
            DmnError::Data(_) | DmnError::Io(_) | DmnError::DimensionMismatch(_) => Category::Data,
            _ => Category::Numerical,
        };
        CliError { category, message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.global.out)
        .map_err(|e| CliError::data(format!("{}: {e}", cli.global.out.display())))?;
    let g = &cli.global;
    match cli.command {
        Command::GenData => commands::gen_data(g),
        Command::Train { data } => commands::train(g, data),
        Command::Eval { model, data } => commands::eval(g, model, data),
        Command::Predict { model } => commands::predict(g, model),
        Command::Simulate { model, path } => commands::simulate(g, model, path),
        Command::Identify { model } => commands::identify(g, model),
        Command::Info { model } => commands::info(g, &model),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.category.name(), e.message);
            ExitCode::from(e.category.code())
        }
    }
}

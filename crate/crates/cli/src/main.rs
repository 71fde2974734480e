//! `kmono`: fit k-monotone densities and run the simulation studies.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ContractionArgs, FitArgs, MtpArgs, SelftestArgs, Table1Args};

#[derive(Debug)]
pub enum CliError {
    /// Bad input file or parameter; exit code 2.
    Input(String),
    /// Failure while computing; exit code 3.
    Runtime(String),
    /// Named invariants failed; exit code 1.
    Selftest(Vec<String>),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Selftest(names) => write!(f, "selftest failed: {}", names.join(", ")),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Selftest(_) => 1,
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<kmono::Error> for CliError {
    fn from(e: kmono::Error) -> Self {
        match e {
            kmono::Error::Parameter(_) | kmono::Error::Shape(_) => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kmono", version, about = "Bayesian estimation of k-monotone densities on (0, 1)")]
pub struct Cli {
    /// Master seed; every output byte is a function of it and the parameters.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root directory for run directories [default: runs].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: logical cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file whose keys mirror the flags; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the posterior to a data file.
    Fit(FitArgs),
    /// Mean squared error table over the six test densities.
    Table1(Table1Args),
    /// Null-proportion estimation from simulated p-values.
    Mtp(MtpArgs),
    /// Posterior contraction probe.
    Contraction(ContractionArgs),
    /// Fast invariant checks.
    Selftest(SelftestArgs),
}

pub struct Globals {
    pub seed: u64,
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = input::read_config(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out.or(file.out.map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs")),
    };
    match cli.command {
        Command::Fit(a) => commands::fit(a, &file.command, &globals),
        Command::Table1(a) => commands::table1(a, &file.command, &globals),
        Command::Mtp(a) => commands::mtp(a, &file.command, &globals),
        Command::Contraction(a) => commands::contraction(a, &file.command, &globals),
        Command::Selftest(a) => commands::selftest(a, &globals),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kmono: {e}");
            ExitCode::from(e.code())
        }
    }
}

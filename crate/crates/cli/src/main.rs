//! `ounoise` command-line tool.
//!
//! Every failure ends the process with a single stderr line of the form
//! `error kind=<kind> message=<json string>` and a nonzero exit code
//! (2 for usage errors, 1 otherwise).

mod commands;
mod output;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: "usage", message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self { kind: "parse", message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { kind: "io", message: format!("{}: {e}", path.display()) }
    }

    pub fn write(e: std::io::Error) -> Self {
        Self { kind: "io", message: e.to_string() }
    }

    pub fn schema(path: &Path, message: impl std::fmt::Display) -> Self {
        Self { kind: "schema", message: format!("{}: {message}", path.display()) }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    fn code(&self) -> u8 {
        if self.kind == "usage" {
            2
        } else {
            1
        }
    }
}

impl From<ounoise::Error> for CliError {
    fn from(e: ounoise::Error) -> Self {
        use ounoise::Error as E;
        let kind = match &e {
            E::InvalidArgument(_) => "invalid_argument",
            E::InvalidParams(_) => "invalid_params",
            E::Degenerate(_) => "degenerate",
            E::MomentDegenerate(_) => "moment_degenerate",
            E::NotEquidistant(_) => "not_equidistant",
            E::BackTransformDomain(_) => "back_transform_domain",
            E::Domain(..) => "domain",
            E::Numerical(_) => "numerical",
            E::UndefinedMoments(_) => "undefined_moments",
            E::InsufficientData(_) => "insufficient_data",
            E::Collinear(_) => "collinear",
            E::InvalidHistory(_) => "invalid_history",
            E::Parse(_) => "parse",
        };
        Self { kind, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ounoise", version, about = "Noise-robust OU estimation and pairs-trading signals")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Flat key = value file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for all random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for multi-file outputs.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a noisy OU path, or raw tick files of a synthetic pair.
    Simulate(commands::SimulateArgs),
    /// Clean one symbol-day of trades (optionally minus a second leg).
    Clean(commands::CleanArgs),
    /// Estimate OU parameters from one or more `time,value` files.
    Estimate(commands::EstimateArgs),
    /// One-step-ahead parameter forecasts from daily fits.
    Forecast(commands::ForecastArgs),
    /// Optimal entry and exit signals for one parameter set.
    Optimize(commands::OptimizeArgs),
    /// Efficient frontier over the variance cap.
    Frontier(commands::FrontierArgs),
    /// Daily strategy backtest over configured pairs.
    Backtest(commands::BacktestArgs),
    /// Mean absolute errors of all estimators on simulated paths.
    Simstudy(commands::SimstudyArgs),
    /// Noise-induced moment-estimator bias versus sample size.
    Biasplot(commands::BiasplotArgs),
    /// Estimated variance versus subsampling step.
    Signature(commands::SignatureArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(p) => settings::read_config(p)?,
        None => Default::default(),
    };
    let mut s = settings::Settings::new(file);
    let threads = s.get("threads", cli.global.threads, 0usize)?;
    if threads > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let ctx = commands::Context {
        seed: s.get("seed", cli.global.seed, 1u64)?,
        config_dir: cli.global.config.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf),
        out_dir: s.get("out_dir", cli.global.out_dir.as_ref().map(|p| p.display().to_string()), ".".into())?.into(),
    };
    // threads and out_dir do not change results; keep them out of the hash
    s.forget(&["threads", "out_dir"]);
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &ctx, s),
        Command::Clean(a) => commands::clean(a, &ctx, s),
        Command::Estimate(a) => commands::estimate(a, &ctx, s),
        Command::Forecast(a) => commands::forecast(a, &ctx, s),
        Command::Optimize(a) => commands::optimize(a, &ctx, s),
        Command::Frontier(a) => commands::frontier(a, &ctx, s),
        Command::Backtest(a) => commands::backtest(a, &ctx, s),
        Command::Simstudy(a) => commands::simstudy(a, &ctx, s),
        Command::Biasplot(a) => commands::biasplot(a, &ctx, s),
        Command::Signature(a) => commands::signature(a, &ctx, s),
    }
}

fn report(e: &CliError) {
    let msg = serde_json::to_string(&e.message).unwrap_or_else(|_| "\"\"".into());
    eprintln!("error kind={} message={msg}", e.kind);
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let err = CliError::usage(first);
            report(&err);
            return ExitCode::from(err.code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.code())
        }
    }
}

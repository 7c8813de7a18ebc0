//! `copar` — copula-autoregressive multivariate time-series modeling.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags, bad config, bad
//! setting combinations), 1 on runtime failures (unreadable or malformed
//! inputs, fit or numerical problems).

use std::fmt;
use std::process;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;

use config::CommonArgs;

/// An error with the exit class it maps to.
#[derive(Debug)]
pub enum CliError {
    /// The command line or config asks for something invalid (exit 2).
    Usage(String),
    /// The run itself failed (exit 1).
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "copar",
    version,
    about = "Copula-autoregressive modeling, forecasting, and lead-lag testing \
             for multivariate time series",
    long_about = "Copula-autoregressive modeling, forecasting, and lead-lag \
                  testing for multivariate time series.\n\nInput CSV files must \
                  already be preprocessed: the models assume stationary series, \
                  so detrend and deseasonalize beforehand. Every flag can also \
                  be written as a key=value line in a --config file; flags \
                  override the file."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model of the given order to CSV data
    Fit(CommonArgs),
    /// Choose the model order by information criterion
    OrderSelect(CommonArgs),
    /// Forecast future values from a saved or freshly fitted model
    Forecast(CommonArgs),
    /// Test lead-lag (Granger) causality between all ordered series pairs
    Granger(CommonArgs),
    /// Simulate a dataset from a saved model file
    Simulate(CommonArgs),
    /// Rolling one-step out-of-sample comparison against a VAR baseline
    Evaluate(CommonArgs),
}

fn run(command: &Command) -> Result<(), CliError> {
    let (cmd, args): (fn(&config::RunConfig) -> Result<(), CliError>, &CommonArgs) =
        match command {
            Command::Fit(args) => (commands::cmd_fit, args),
            Command::OrderSelect(args) => (commands::cmd_order_select, args),
            Command::Forecast(args) => (commands::cmd_forecast, args),
            Command::Granger(args) => (commands::cmd_granger, args),
            Command::Simulate(args) => (commands::cmd_simulate, args),
            Command::Evaluate(args) => (commands::cmd_evaluate, args),
        };
    cmd(&config::resolve(args)?)
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli.command) {
        match err {
            CliError::Usage(msg) => {
                eprintln!("usage error: {msg}");
                process::exit(2);
            }
            CliError::Runtime(msg) => {
                eprintln!("error: {msg}");
                process::exit(1);
            }
        }
    }
}

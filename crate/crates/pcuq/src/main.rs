use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pcuq::{CliError, Command, Method, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "pcuq", version, about = "Prediction-centric uncertainty quantification")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a dataset and its noiseless truth.
    GenerateData(Common),
    /// Sample parameters with the configured method.
    Fit(Common),
    /// Summarise the predictive distribution of fitted samples.
    Predict(Common),
    /// Select λ by matching the Bayes posterior spread.
    CalibrateLambda(Common),
    /// Coverage and band width of predictive files against the truth.
    Report(Common),
    /// Solve the fixed-point equation on a grid.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// `section.key=value`, applied after the configuration file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "bayes" => Ok(Method::Bayes),
        "mmd-bayes" => Ok(Method::MmdBayes),
        "pcuq" => Ok(Method::Pcuq),
        "oracle" => Ok(Method::Oracle),
        _ => Err("expected bayes, mmd-bayes, pcuq or oracle".into()),
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let (cmd, common) = match cli.command {
        Cmd::GenerateData(c) => (Command::GenerateData, c),
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Predict(c) => (Command::Predict, c),
        Cmd::CalibrateLambda(c) => (Command::CalibrateLambda, c),
        Cmd::Report(c) => (Command::Report, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads: must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let overrides = Overrides {
        sets: common.sets,
        seed: common.seed,
        out: common.out,
        scenario: common.scenario,
        method: common.method,
    };
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    pcuq::run(cmd, &cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}

//! `nsim`: measure, ingest, generate, simulate, cost and report.

mod bench_cmd;
mod config;
mod cost_cmd;
mod failure;
mod gen_cmd;
mod io;
mod report_cmd;
mod results;
mod sim_cmd;
mod trace_cmd;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::failure::{CliResult, Failure};

#[derive(Parser, Debug)]
#[command(name = "nsim", version, about = "Network and OS noise simulation toolkit")]
struct Cli {
    /// Print errors as a JSON object on stderr.
    #[arg(long, global = true, env = "NSIM_ERROR_JSON")]
    error_json: bool,

    /// TOML file with default option values.
    #[arg(long, global = true, env = "NSIM_CONFIG")]
    config: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Host microbenchmarks producing traces.
    #[command(subcommand)]
    Bench(bench_cmd::BenchCmd),
    /// Trace analytics: distributions, normalisation, filtering.
    #[command(subcommand)]
    Trace(trace_cmd::TraceCmd),
    /// Generate collective schedules as GOAL text.
    #[command(subcommand)]
    Gen(gen_cmd::GenCmd),
    /// Simulate schedules or fit LogGP parameters.
    #[command(subcommand)]
    Sim(sim_cmd::SimCmd),
    /// Monetary cost of simulated runs.
    Cost(cost_cmd::CostArgs),
    /// Boxplot statistics and figures.
    #[command(subcommand)]
    Report(report_cmd::ReportCmd),
}

/// Where a command writes its main output.
#[derive(Args, Debug, Clone)]
pub struct OutputArg {
    /// Output file; `-` or absent for stdout.
    #[arg(short, long)]
    pub output: Option<String>,
}

fn run(cli: Cli) -> CliResult {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Bench(c) => bench_cmd::run(c),
        Command::Trace(c) => trace_cmd::run(c),
        Command::Gen(c) => gen_cmd::run(c),
        Command::Sim(c) => sim_cmd::run(c, &config),
        Command::Cost(c) => cost_cmd::run(c, &config),
        Command::Report(c) => report_cmd::run(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let json = std::env::args().any(|a| a == "--error-json")
                || std::env::var("NSIM_ERROR_JSON").is_ok_and(|v| v == "true" || v == "1");
            if e.use_stderr() && json {
                eprintln!("{}", Failure::usage(e.to_string().trim_end()).to_json());
                return ExitCode::from(2);
            }
            // Help and version go to stdout with status 0; usage errors exit 2.
            e.exit();
        }
    };
    let json = cli.error_json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if json {
                eprintln!("{}", f.to_json());
            } else {
                eprintln!("nsim: {f}");
            }
            ExitCode::from(f.class.exit_code() as u8)
        }
    }
}

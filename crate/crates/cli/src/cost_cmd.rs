use clap::{Args, ValueEnum};
use nsim_core::cost::{lookup, parse_catalog, run_cost, PriceLabel, PriceSpec};
use serde::Serialize;

use crate::config::Config;
use crate::failure::{CliResult, Failure};
use crate::io::{read_bytes, read_text, write_output};
use crate::results::ResultsFile;
use crate::OutputArg;

/// Shipped catalog, used when no `--price-catalog` is given.
pub const BUILTIN_CATALOG: &str = include_str!("../data/price_catalog.csv");

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Results JSON from `sim run`; `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub results: String,
    /// Price CSV (provider,instance,label,usd_per_hour); built-in if absent.
    #[arg(long, env = "NSIM_PRICE_CATALOG")]
    pub price_catalog: Option<String>,
    #[arg(long, env = "NSIM_PROVIDER")]
    pub provider: Option<String>,
    /// Needed when the provider lists several instances.
    #[arg(long, env = "NSIM_INSTANCE")]
    pub instance: Option<String>,
    /// committed or on_demand.
    #[arg(long, env = "NSIM_LABEL")]
    pub label: Option<String>,
    /// Node count; defaults to the schedule's rank count.
    #[arg(long, env = "NSIM_NODES")]
    pub nodes: Option<u32>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct RunCost {
    run: usize,
    completion_ns: u64,
    usd: f64,
    relative_increase: f64,
}

#[derive(Serialize)]
struct CostReport {
    price: PriceSpec,
    nodes: u32,
    noiseless_completion_ns: u64,
    noiseless_usd: f64,
    mean_usd: f64,
    mean_relative_increase: f64,
    runs: Vec<RunCost>,
}

pub fn run(a: CostArgs, config: &Config) -> CliResult {
    let catalog = match config.or(a.price_catalog.clone(), "price_catalog")? {
        Some(path) => parse_catalog(read_bytes(&path)?.as_slice()).map_err(|e| Failure::from(e).context(&path))?,
        None => parse_catalog(BUILTIN_CATALOG.as_bytes())?,
    };
    let provider = config
        .or(a.provider.clone(), "provider")?
        .ok_or_else(|| Failure::usage("--provider is required"))?;
    let instance = config.or(a.instance.clone(), "instance")?;
    let label: PriceLabel = config
        .or(a.label.clone(), "label")?
        .unwrap_or_else(|| "on_demand".to_string())
        .parse()?;
    let price = lookup(&catalog, &provider, instance.as_deref(), label)?.clone();

    let doc: ResultsFile = serde_json::from_str(&read_text(&a.results)?)
        .map_err(|e| Failure::validation(format!("{}: {e}", a.results)))?;
    let nodes = config.or(a.nodes, "nodes")?.unwrap_or(doc.metadata.nranks);
    let base = doc.metadata.noiseless_completion_ns;
    if base == 0 {
        return Err(Failure::validation("results have a zero noiseless completion time"));
    }
    let runs = doc
        .runs
        .iter()
        .map(|r| {
            Ok(RunCost {
                run: r.run,
                completion_ns: r.completion_ns,
                usd: run_cost(r.completion_ns, nodes, &price)?,
                relative_increase: r.completion_ns as f64 / base as f64 - 1.0,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let n = runs.len().max(1) as f64;
    let report = CostReport {
        noiseless_usd: run_cost(base, nodes, &price)?,
        mean_usd: runs.iter().map(|r| r.usd).sum::<f64>() / n,
        mean_relative_increase: runs.iter().map(|r| r.relative_increase).sum::<f64>() / n,
        price,
        nodes,
        noiseless_completion_ns: base,
        runs,
    };
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report).map_err(Failure::from)? + "\n",
        Format::Csv => {
            let mut s = String::from("run,completion_ns,usd,relative_increase\n");
            for r in &report.runs {
                s += &format!("{},{},{},{}\n", r.run, r.completion_ns, r.usd, r.relative_increase);
            }
            s
        }
    };
    write_output(a.out.output.as_deref(), &text)
}

use std::path::Path;

use clap::{Args, Subcommand, ValueEnum};
use nsim_core::noise::parse_trace;
use nsim_core::report::{render, EmitOptions, Format, Group};
use nsim_core::Unit;
use serde_json::Value;

use crate::failure::{CliResult, Failure};
use crate::io::{read_bytes, write_output};
use crate::OutputArg;

#[derive(Subcommand, Debug)]
pub enum ReportCmd {
    /// Boxplot statistics per input as CSV or JSON.
    Box {
        #[command(flatten)]
        input: Inputs,
        #[arg(long, value_enum, default_value_t = TableFormat::Json)]
        format: TableFormat,
        /// Include the raw samples.
        #[arg(long)]
        samples: bool,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Self-contained SVG boxplot, one box per input.
    Svg {
        #[command(flatten)]
        input: Inputs,
        /// Log-2 value axis.
        #[arg(long)]
        log2: bool,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "")]
        y_label: String,
        #[command(flatten)]
        out: OutputArg,
    },
}

#[derive(Args, Debug)]
pub struct Inputs {
    /// `LABEL=FILE` or `FILE` (labelled by its stem). FILE is a results or
    /// cost JSON, or a trace CSV.
    #[arg(short, long = "input", required = true)]
    pub inputs: Vec<String>,
    /// Value taken from JSON inputs.
    #[arg(long, value_enum, default_value_t = Metric::Completion)]
    pub metric: Metric,
    /// Unit of CSV trace inputs.
    #[arg(long, default_value = "ns")]
    pub unit: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Completion time in ns.
    Completion,
    /// Runtime (and cost) increase over the noiseless run.
    RelativeIncrease,
    /// USD per run; cost reports only.
    Usd,
}

fn json_samples(path: &str, doc: &Value, metric: Metric) -> CliResult<Vec<f64>> {
    let bad = |what: &str| Failure::validation(format!("{path}: {what}"));
    let runs = doc["runs"].as_array().ok_or_else(|| bad("no 'runs' array"))?;
    let base = doc["metadata"]["noiseless_completion_ns"]
        .as_f64()
        .or_else(|| doc["noiseless_completion_ns"].as_f64());
    runs.iter()
        .map(|r| {
            let field = |k: &str| r[k].as_f64().ok_or_else(|| bad(&format!("run without '{k}'")));
            match metric {
                Metric::Completion => field("completion_ns"),
                Metric::Usd => field("usd"),
                Metric::RelativeIncrease => match r["relative_increase"].as_f64() {
                    Some(v) => Ok(v),
                    None => {
                        let b = base.filter(|&b| b > 0.0).ok_or_else(|| bad("no noiseless baseline"))?;
                        Ok(field("completion_ns")? / b - 1.0)
                    }
                },
            }
        })
        .collect()
}

fn load_groups(inp: &Inputs) -> CliResult<Vec<Group>> {
    let unit: Unit = inp.unit.parse()?;
    inp.inputs
        .iter()
        .map(|spec| {
            let (label, path) = match spec.split_once('=') {
                Some((l, p)) => (l.to_string(), p),
                None => {
                    let stem = Path::new(spec).file_stem().map(|s| s.to_string_lossy().into_owned());
                    (stem.unwrap_or_else(|| spec.clone()), spec.as_str())
                }
            };
            let bytes = read_bytes(path)?;
            let samples = if path.ends_with(".csv") {
                parse_trace(bytes.as_slice(), Path::new(path), unit)?.values().collect()
            } else {
                let doc: Value =
                    serde_json::from_slice(&bytes).map_err(|e| Failure::validation(format!("{path}: {e}")))?;
                json_samples(path, &doc, inp.metric)?
            };
            Ok(Group { label, samples })
        })
        .collect()
}

pub fn run(cmd: ReportCmd) -> CliResult {
    match cmd {
        ReportCmd::Box {
            input,
            format,
            samples,
            out,
        } => {
            let groups = load_groups(&input)?;
            let format = match format {
                TableFormat::Csv => Format::Csv,
                TableFormat::Json => Format::Json,
            };
            let opts = EmitOptions {
                include_samples: samples,
                ..EmitOptions::default()
            };
            write_output(out.output.as_deref(), &render(&groups, format, &opts)?)
        }
        ReportCmd::Svg {
            input,
            log2,
            title,
            y_label,
            out,
        } => {
            let groups = load_groups(&input)?;
            let opts = EmitOptions {
                include_samples: false,
                log2_scale: log2,
                title,
                y_label,
            };
            write_output(out.output.as_deref(), &render(&groups, Format::Svg, &opts)?)
        }
    }
}

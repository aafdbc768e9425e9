use clap::{Args, Subcommand, ValueEnum};
use nsim_core::noise::{build_distribution, normalize_max, normalize_min, top_fraction, Side};
use nsim_core::Unit;

use crate::failure::{CliResult, Failure};
use crate::io::{load_trace, trace_csv, write_output};
use crate::OutputArg;

#[derive(Subcommand, Debug)]
pub enum TraceCmd {
    /// Empirical distribution (sorted samples) as JSON.
    Dist(TraceIn),
    /// Divide every value by the trace minimum or maximum.
    Normalize {
        #[command(flatten)]
        input: TraceIn,
        #[arg(long, value_enum, default_value_t = By::Min)]
        by: By,
    },
    /// Keep the largest or smallest fraction of samples, in trace order.
    Top {
        #[command(flatten)]
        input: TraceIn,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value = "largest", value_parser = parse_side)]
        side: Side,
    },
}

#[derive(Args, Debug)]
pub struct TraceIn {
    /// Trace CSV; `-` reads stdin.
    #[arg(short, long, default_value = "-")]
    pub input: String,
    /// Expected unit of the values (ns, gbps, ns_per_byte, ratio).
    #[arg(short, long, default_value = "ns", value_parser = parse_unit)]
    pub unit: Unit,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum By {
    Min,
    Max,
}

fn parse_unit(s: &str) -> Result<Unit, String> {
    s.parse().map_err(|e: nsim_core::Error| e.to_string())
}

fn parse_side(s: &str) -> Result<Side, String> {
    s.parse().map_err(|e: nsim_core::Error| e.to_string())
}

pub fn run(cmd: TraceCmd) -> CliResult {
    match cmd {
        TraceCmd::Dist(t) => {
            let (trace, _) = load_trace(&t.input, t.unit)?;
            let dist = build_distribution(&trace)?;
            let text = serde_json::to_string_pretty(&dist).map_err(Failure::from)? + "\n";
            write_output(t.out.output.as_deref(), &text)
        }
        TraceCmd::Normalize { input: t, by } => {
            let (trace, _) = load_trace(&t.input, t.unit)?;
            let norm = match by {
                By::Min => normalize_min(&trace)?,
                By::Max => normalize_max(&trace)?,
            };
            write_output(t.out.output.as_deref(), &trace_csv(&norm)?)
        }
        TraceCmd::Top {
            input: t,
            fraction,
            side,
        } => {
            let (trace, _) = load_trace(&t.input, t.unit)?;
            let top = top_fraction(&trace, fraction, side)?;
            write_output(t.out.output.as_deref(), &trace_csv(&top)?)
        }
    }
}

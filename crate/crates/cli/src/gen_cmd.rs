use clap::{Args, Subcommand, ValueEnum};
use nsim_core::goal::{emit_goal, gen_compute_collective, gen_dissemination, gen_ring_allreduce, Pattern};
use nsim_core::Schedule;

use crate::failure::{CliResult, Failure};
use crate::io::write_output;
use crate::OutputArg;

#[derive(Subcommand, Debug)]
pub enum GenCmd {
    /// Dissemination: ceil(log2 P) rounds of send/recv at distance 2^k.
    Dissem {
        #[arg(short, long)]
        p: u32,
        #[arg(short, long)]
        size: u64,
        #[command(flatten)]
        out: GenOut,
    },
    /// Ring allreduce: reduce-scatter then allgather, size/P per step.
    Ring {
        #[arg(short, long)]
        p: u32,
        #[arg(short, long)]
        size: u64,
        /// Reduction time per received chunk in the reduce-scatter phase.
        #[arg(long, default_value_t = 0)]
        reduce_cost: u64,
        #[command(flatten)]
        out: GenOut,
    },
    /// Mock application: compute then collective, repeated.
    Compapp {
        #[arg(short, long)]
        p: u32,
        /// Compute time per iteration and rank, ns.
        #[arg(long)]
        comp: u64,
        #[arg(long, default_value = "dissemination", value_parser = parse_pattern)]
        pattern: Pattern,
        #[arg(short, long)]
        size: u64,
        #[arg(long, default_value_t = 1)]
        iterations: u32,
        #[command(flatten)]
        out: GenOut,
    },
}

#[derive(Args, Debug)]
pub struct GenOut {
    #[arg(long, value_enum, default_value_t = Format::Goal)]
    pub format: Format,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Goal,
    Json,
}

fn parse_pattern(s: &str) -> Result<Pattern, String> {
    s.parse().map_err(|e: nsim_core::Error| e.to_string())
}

fn write(s: &Schedule, out: &GenOut) -> CliResult {
    let text = match out.format {
        Format::Goal => emit_goal(s),
        Format::Json => s.to_json().map_err(Failure::from)? + "\n",
    };
    write_output(out.out.output.as_deref(), &text)
}

pub fn run(cmd: GenCmd) -> CliResult {
    match cmd {
        GenCmd::Dissem { p, size, out } => write(&gen_dissemination(p, size)?, &out),
        GenCmd::Ring {
            p,
            size,
            reduce_cost,
            out,
        } => write(&gen_ring_allreduce(p, size, reduce_cost)?, &out),
        GenCmd::Compapp {
            p,
            comp,
            pattern,
            size,
            iterations,
            out,
        } => write(&gen_compute_collective(p, comp, pattern, size, iterations)?, &out),
    }
}

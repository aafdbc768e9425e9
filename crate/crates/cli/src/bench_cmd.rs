use std::io::Write;
use std::net::TcpListener;
use std::time::Duration;

use clap::{Args, Subcommand};
use nsim_bench::detour::{DetourPlan, DEFAULT_MULTIPLIER, DEFAULT_PROBE_ITERATIONS, DEFAULT_TARGET_RECORDS};
use nsim_bench::pingpong::DEFAULT_WARMUP;
use nsim_bench::{BenchPlan, Mode, Role};
use nsim_core::noise::write_detour_trace;

use crate::failure::{CliResult, Failure};
use crate::io::{trace_csv, write_output};
use crate::OutputArg;

#[derive(Subcommand, Debug)]
pub enum BenchCmd {
    /// Ping-pong RTT/2 trace; `--listen` runs the responder instead.
    Pingpong(PingArgs),
    /// Two simultaneous ping-pongs, one started from each side.
    Bidir(BidirArgs),
    /// Selfish-detour OS noise trace.
    Detour(DetourArgs),
}

#[derive(Args, Debug)]
pub struct PingArgs {
    /// Responder address to connect to, e.g. 10.0.0.2:7000.
    #[arg(long, conflicts_with = "listen", required_unless_present = "listen")]
    pub peer: Option<String>,
    /// Serve as responder on this address; port 0 picks a free port.
    #[arg(long)]
    pub listen: Option<String>,
    /// Stop the responder after this many sessions.
    #[arg(long, requires = "listen")]
    pub sessions: Option<usize>,
    /// Message size in bytes, split over the connections.
    #[arg(short, long, default_value_t = 1)]
    pub size: u64,
    #[arg(short = 'n', long, default_value_t = 1000)]
    pub iterations: u32,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: u32,
    #[arg(short, long, default_value_t = 1)]
    pub connections: u16,
    /// Pause between an iteration's end and the next one's start.
    #[arg(long, default_value_t = 0)]
    pub interval_ns: u64,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Args, Debug)]
pub struct BidirArgs {
    #[command(flatten)]
    pub ping: PingArgs,
    /// Where to write the trace of the peer-initiated direction.
    #[arg(long, required_unless_present = "listen")]
    pub incoming: Option<String>,
}

#[derive(Args, Debug)]
pub struct DetourArgs {
    #[arg(long, default_value_t = DEFAULT_TARGET_RECORDS)]
    pub records: usize,
    /// Iterations longer than this multiple of the fastest one are detours.
    #[arg(long, default_value_t = DEFAULT_MULTIPLIER)]
    pub multiplier: u64,
    #[arg(long, default_value_t = DEFAULT_PROBE_ITERATIONS)]
    pub probe: usize,
    /// Give up after this many seconds even if fewer records were found.
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[command(flatten)]
    pub out: OutputArg,
}

fn plan(a: &PingArgs, mode: Mode) -> BenchPlan {
    BenchPlan {
        mode,
        size: a.size,
        iterations: a.iterations,
        warmup_iterations: a.warmup,
        connections: a.connections,
        inter_message_interval_ns: a.interval_ns,
        peer: a.peer.clone().unwrap_or_default(),
        role: if a.listen.is_some() {
            Role::Responder
        } else {
            Role::Initiator
        },
    }
}

fn respond(addr: &str, sessions: Option<usize>) -> CliResult {
    let listener = TcpListener::bind(addr).map_err(|e| Failure::from(e).context(addr))?;
    // Scripts read this line to learn the port.
    let mut err = std::io::stderr();
    writeln!(err, "listening on {}", listener.local_addr()?)?;
    err.flush()?;
    nsim_bench::serve(&listener, sessions)?;
    Ok(())
}

pub fn run(cmd: BenchCmd) -> CliResult {
    match cmd {
        BenchCmd::Pingpong(a) => {
            if let Some(addr) = &a.listen {
                return respond(addr, a.sessions);
            }
            let trace = nsim_bench::pingpong(&plan(&a, Mode::PingPong))?;
            write_output(a.out.output.as_deref(), &trace_csv(&trace)?)
        }
        BenchCmd::Bidir(a) => {
            if let Some(addr) = &a.ping.listen {
                return respond(addr, a.ping.sessions);
            }
            let (out, inc) = nsim_bench::pingpong_bidirectional(&plan(&a.ping, Mode::PingPongBidir))?;
            write_output(a.incoming.as_deref(), &trace_csv(&inc)?)?;
            write_output(a.ping.out.output.as_deref(), &trace_csv(&out)?)
        }
        BenchCmd::Detour(a) => {
            let max_duration = match a.max_seconds {
                Some(s) if !(s > 0.0 && s.is_finite()) => return Err(Failure::usage("--max-seconds must be positive")),
                s => s.map(Duration::from_secs_f64),
            };
            let run = nsim_bench::selfish_detour(&DetourPlan {
                target_records: a.records,
                threshold_multiplier: a.multiplier,
                probe_iterations: a.probe,
                max_duration,
            })?;
            eprintln!("t_min_ns={} records={}", run.t_min, run.trace.events().len());
            if !run.complete {
                eprintln!("warning: time limit reached before {} records were found", a.records);
            }
            let mut buf = Vec::new();
            write_detour_trace(&run.trace, &mut buf)?;
            write_output(a.out.output.as_deref(), &String::from_utf8_lossy(&buf))
        }
    }
}

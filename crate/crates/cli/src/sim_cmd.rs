use clap::{Args, Subcommand};
use nsim_core::goal::parse_goal;
use nsim_core::model::{calibrate, DEFAULT_O_FRACTION};
use nsim_core::noise::build_distribution;
use nsim_core::sim::{run_program_many, Program, PRNG_NAME};
use nsim_core::{LogGPParams, NoiseModel, Schedule, SimConfig, Unit};

use crate::config::Config;
use crate::failure::{CliResult, Failure};
use crate::io::{load_detours, load_trace, read_text, sha256_hex, write_output};
use crate::results::{InputDigest, Metadata, NoiseInputs, ResultsFile, Run, RESULTS_SCHEMA};
use crate::OutputArg;

#[derive(Subcommand, Debug)]
pub enum SimCmd {
    /// Simulate a schedule, optionally under measured noise.
    Run(RunArgs),
    /// Fit LogGP parameters to a small- and a large-message RTT/2 trace.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// GOAL text or schedule JSON; `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub goal: String,
    /// LogGP parameters as JSON: {"L": ns, "o": ns, "g": ns, "G": ns/byte}.
    #[arg(long, env = "NSIM_PARAMS")]
    pub params: Option<String>,
    /// Override L from the parameter file.
    #[arg(long = "L")]
    pub latency: Option<u64>,
    #[arg(long = "o")]
    pub overhead: Option<u64>,
    #[arg(long = "g")]
    pub gap: Option<u64>,
    #[arg(long = "G")]
    pub gap_per_byte: Option<f64>,
    /// One-way small-message latency trace (ns).
    #[arg(long, env = "NSIM_NOISE_LAT")]
    pub noise_lat: Option<String>,
    /// Bandwidth trace (gbps).
    #[arg(long, env = "NSIM_NOISE_BW")]
    pub noise_bw: Option<String>,
    /// OS detour trace.
    #[arg(long, env = "NSIM_NOISE_OS")]
    pub noise_os: Option<String>,
    #[arg(long, env = "NSIM_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "NSIM_REPS")]
    pub reps: Option<usize>,
    /// Include every rank's completion time in each run.
    #[arg(long)]
    pub per_rank: bool,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// RTT/2 trace of 1-byte messages (ns).
    #[arg(long)]
    pub small: String,
    /// RTT/2 trace of `--large-size`-byte messages (ns).
    #[arg(long)]
    pub large: String,
    #[arg(long)]
    pub large_size: u64,
    /// Share of the small-message time attributed to the two overheads.
    #[arg(long, default_value_t = DEFAULT_O_FRACTION)]
    pub o_fraction: f64,
    #[command(flatten)]
    pub out: OutputArg,
}

pub fn load_schedule(path: &str) -> CliResult<(Schedule, String)> {
    let text = read_text(path)?;
    let digest = sha256_hex(text.as_bytes());
    let schedule = if text.trim_start().starts_with('{') {
        let s = Schedule::from_json(&text).map_err(Failure::from)?;
        // JSON bypasses the parser, so validate explicitly.
        Program::compile(&s)?;
        s
    } else {
        parse_goal(&text)?
    };
    Ok((schedule, digest))
}

fn resolve_params(a: &RunArgs, config: &Config) -> CliResult<LogGPParams> {
    let file = config.or(a.params.clone(), "params")?;
    let mut params = match &file {
        Some(path) => serde_json::from_str::<LogGPParams>(&read_text(path)?)
            .map_err(|e| Failure::validation(format!("{path}: {e}")))?,
        None => LogGPParams::new(0, 0, 0, 0.0)?,
    };
    let overrides = [
        (config.or(a.latency, "L")?, &mut params.latency),
        (config.or(a.overhead, "o")?, &mut params.overhead),
        (config.or(a.gap, "g")?, &mut params.gap),
    ];
    let mut any_override = false;
    for (v, slot) in overrides {
        if let Some(v) = v {
            *slot = v;
            any_override = true;
        }
    }
    if let Some(gpb) = config.or(a.gap_per_byte, "G")? {
        params.gap_per_byte = gpb;
        any_override = true;
    }
    if file.is_none() && !any_override {
        return Err(Failure::usage(
            "no LogGP parameters: pass --params FILE or --L/--o/--g/--G",
        ));
    }
    params.check()?;
    Ok(params)
}

fn run_sim(a: RunArgs, config: &Config) -> CliResult {
    let params = resolve_params(&a, config)?;
    let seed = config.or(a.seed, "seed")?.unwrap_or(0);
    let reps = config.or(a.reps, "reps")?.unwrap_or(1);
    if reps == 0 {
        return Err(Failure::usage("--reps must be at least 1"));
    }
    let (schedule, goal_digest) = load_schedule(&a.goal)?;

    let mut noise = NoiseModel::noiseless();
    let mut inputs = NoiseInputs::default();
    if let Some(path) = config.or(a.noise_lat.clone(), "noise_lat")? {
        let (trace, sha256) = load_trace(&path, Unit::Nanoseconds)?;
        noise.latency = Some(build_distribution(&trace)?);
        inputs.latency = Some(InputDigest { path, sha256 });
    }
    if let Some(path) = config.or(a.noise_bw.clone(), "noise_bw")? {
        let (trace, sha256) = load_trace(&path, Unit::Gbps)?;
        noise.bandwidth = Some(build_distribution(&trace)?);
        inputs.bandwidth = Some(InputDigest { path, sha256 });
    }
    if let Some(path) = config.or(a.noise_os.clone(), "noise_os")? {
        let (trace, sha256) = load_detours(&path)?;
        noise.os = Some(trace);
        inputs.os = Some(InputDigest { path, sha256 });
    }

    let program = Program::compile(&schedule)?;
    let baseline = program.run(&SimConfig::noiseless(params), 0)?;
    let cfg = SimConfig {
        params,
        noise,
        seed,
        record_per_op: false,
    };
    let results = run_program_many(&program, &cfg, reps)?;

    let doc = ResultsFile {
        metadata: Metadata {
            schema: RESULTS_SCHEMA.to_string(),
            generator: schedule.metadata.generator.clone(),
            schedule_params: schedule.metadata.params.clone(),
            goal: InputDigest {
                path: a.goal.clone(),
                sha256: goal_digest,
            },
            nranks: schedule.nranks,
            ops: schedule.op_count(),
            params,
            noise: inputs,
            seed,
            prng: PRNG_NAME.to_string(),
            reps,
            noiseless_completion_ns: baseline.completion,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        },
        runs: results
            .into_iter()
            .enumerate()
            .map(|(run, r)| Run {
                run,
                completion_ns: r.completion,
                per_rank: a.per_rank.then_some(r.per_rank_completion),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&doc).map_err(Failure::from)? + "\n";
    write_output(a.out.output.as_deref(), &text)
}

pub fn run(cmd: SimCmd, config: &Config) -> CliResult {
    match cmd {
        SimCmd::Run(a) => run_sim(a, config),
        SimCmd::Calibrate(a) => {
            let (small, _) = load_trace(&a.small, Unit::Nanoseconds)?;
            let (large, _) = load_trace(&a.large, Unit::Nanoseconds)?;
            let cal = calibrate(&small, &large, a.large_size, a.o_fraction)?;
            let text = serde_json::to_string_pretty(&cal.params).map_err(Failure::from)? + "\n";
            write_output(a.out.output.as_deref(), &text)
        }
    }
}

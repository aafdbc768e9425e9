//! Deterministic discrete-event execution of a [`Schedule`] under LogGP
//! timing, with optional per-message latency/bandwidth draws and OS detour
//! replay.
//!
//! Execution rules:
//!
//! * An op becomes ready once everything it `requires` has finished and,
//!   for a recv, once its matched message has arrived.
//! * Ready ops are dispatched in `(ready time, rank, op id)` order. Each
//!   rank has one host: an op starts at `max(ready, host free)`, and a
//!   message op additionally no earlier than `g` after the previous message
//!   op's start on that rank.
//! * Sends and recvs occupy the host for `o`, calcs for their duration;
//!   occupancies stretch over OS detours.
//! * A message leaves when the send's occupancy ends and arrives
//!   `L + (size - 1)G` later. A latency draw `v` replaces `2o + L`, i.e. the
//!   wire latency becomes `v - 2o`; a bandwidth draw `bw` sets `G = 8 / bw`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::{match_messages, validate, OpKind, Schedule};
use crate::model::{round_half_up, transfer_time, LogGPParams, NoiseModel};

/// Name of the random stream recorded in result metadata.
pub const PRNG_NAME: &str = "ChaCha8Rng(rand_chacha 0.3, seed_from_u64); run seeds by SplitMix64";

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: LogGPParams,
    pub noise: NoiseModel,
    pub seed: u64,
    pub record_per_op: bool,
}

impl SimConfig {
    pub fn noiseless(params: LogGPParams) -> Self {
        SimConfig {
            params,
            noise: NoiseModel::noiseless(),
            seed: 0,
            record_per_op: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTiming {
    pub start: u64,
    pub finish: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub completion: u64,
    pub per_rank_completion: Vec<u64>,
    /// `per_op_times[rank][op]`, present when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_op_times: Option<Vec<Vec<OpTiming>>>,
    pub draws_used: u64,
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index`: the `(index + 1)`-th output of a SplitMix64
/// generator seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// A schedule flattened into index arrays so that repeated runs only
/// allocate their own timing state.
#[derive(Debug, Clone)]
pub struct Program {
    nranks: usize,
    /// Global index of each rank's first op; one extra entry at the end.
    offsets: Vec<usize>,
    kinds: Vec<OpKind>,
    ranks: Vec<u32>,
    /// Number of events an op waits for before it is ready.
    waits: Vec<u32>,
    dependents_start: Vec<u32>,
    dependents: Vec<u32>,
    /// For a send, the global index of its matched recv.
    partner: Vec<u32>,
}

impl Program {
    /// Validates and flattens `s`.
    pub fn compile(s: &Schedule) -> Result<Self> {
        let violations = validate(s);
        if !violations.is_empty() {
            return Err(Error::Validation(violations.iter().map(ToString::to_string).collect()));
        }
        Ok(Self::compile_unchecked(s))
    }

    fn compile_unchecked(s: &Schedule) -> Self {
        let mut offsets = Vec::with_capacity(s.ranks.len() + 1);
        let mut total = 0usize;
        for ops in &s.ranks {
            offsets.push(total);
            total += ops.len();
        }
        offsets.push(total);
        assert!(total < NONE as usize, "schedule too large");

        let mut kinds = Vec::with_capacity(total);
        let mut ranks = Vec::with_capacity(total);
        let mut waits = vec![0u32; total];
        let mut fanout = vec![0u32; total + 1];
        for (rank, ops) in s.ranks.iter().enumerate() {
            for op in ops {
                let me = offsets[rank] + op.id as usize;
                kinds.push(op.kind);
                ranks.push(rank as u32);
                waits[me] = op.requires.len() as u32;
                for &dep in &op.requires {
                    fanout[offsets[rank] + dep as usize] += 1;
                }
            }
        }
        let mut dependents_start = Vec::with_capacity(total + 1);
        let mut acc = 0u32;
        for f in &fanout[..total] {
            dependents_start.push(acc);
            acc += f;
        }
        dependents_start.push(acc);
        let mut fill = dependents_start.clone();
        let mut dependents = vec![0u32; acc as usize];
        for (rank, ops) in s.ranks.iter().enumerate() {
            for op in ops {
                let me = (offsets[rank] + op.id as usize) as u32;
                for &dep in &op.requires {
                    let d = offsets[rank] + dep as usize;
                    dependents[fill[d] as usize] = me;
                    fill[d] += 1;
                }
            }
        }
        let mut partner = vec![NONE; total];
        for ((sr, so), (rr, ro)) in match_messages(s) {
            let send = offsets[sr as usize] + so as usize;
            let recv = offsets[rr as usize] + ro as usize;
            partner[send] = recv as u32;
            waits[recv] += 1;
        }
        Program {
            nranks: s.ranks.len(),
            offsets,
            kinds,
            ranks,
            waits,
            dependents_start,
            dependents,
            partner,
        }
    }

    pub fn nranks(&self) -> usize {
        self.nranks
    }

    pub fn op_count(&self) -> usize {
        self.kinds.len()
    }

    /// Runs the program once with the random stream seeded by `seed`.
    pub fn run(&self, cfg: &SimConfig, seed: u64) -> Result<SimResult> {
        cfg.params.check()?;
        cfg.noise.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draws = 0u64;
        let p = &cfg.params;
        let noise = &cfg.noise;
        let n = self.op_count();

        let phases: Vec<u64> = match &noise.os {
            Some(trace) => (0..self.nranks).map(|_| rng.gen_range(0..trace.span())).collect(),
            None => Vec::new(),
        };
        let occupy = |rank: usize, start: u64, work: u64| match &noise.os {
            Some(trace) => trace.occupy(start, work, phases[rank]),
            None => start + work,
        };

        let mut waits = self.waits.clone();
        let mut ready = vec![0u64; n];
        let mut host_free = vec![0u64; self.nranks];
        let mut last_msg_start: Vec<Option<u64>> = vec![None; self.nranks];
        let mut per_rank = vec![0u64; self.nranks];
        let mut timings = cfg.record_per_op.then(|| vec![OpTiming { start: 0, finish: 0 }; n]);
        let mut done = 0usize;

        let mut heap: BinaryHeap<Reverse<(u64, u32)>> = (0..n as u32)
            .filter(|&i| waits[i as usize] == 0)
            .map(|i| Reverse((0, i)))
            .collect();

        while let Some(Reverse((at, idx))) = heap.pop() {
            let i = idx as usize;
            let rank = self.ranks[i] as usize;
            let kind = self.kinds[i];
            let mut start = at.max(host_free[rank]);
            if kind.is_message() {
                if let Some(prev) = last_msg_start[rank] {
                    start = start.max(prev + p.gap);
                }
                last_msg_start[rank] = Some(start);
            }
            let work = match kind {
                OpKind::Calc { duration } => duration,
                _ => p.overhead,
            };
            let finish = occupy(rank, start, work);
            host_free[rank] = finish;
            per_rank[rank] = per_rank[rank].max(finish);
            if let Some(t) = timings.as_mut() {
                t[i] = OpTiming { start, finish };
            }
            done += 1;

            if let OpKind::Send { size, .. } = kind {
                let latency = match &noise.latency {
                    Some(dist) => {
                        draws += 1;
                        let v = round_half_up(dist.sample_unchecked(rng.gen::<f64>()));
                        v.saturating_sub(2 * p.overhead)
                    }
                    None => p.latency,
                };
                let transfer = match &noise.bandwidth {
                    Some(dist) => {
                        draws += 1;
                        let gbps = dist.sample_unchecked(rng.gen::<f64>());
                        transfer_time(size, 8.0 / gbps)
                    }
                    None => transfer_time(size, p.gap_per_byte),
                };
                let recv = self.partner[i] as usize;
                let arrival = finish + latency + transfer;
                ready[recv] = ready[recv].max(arrival);
                waits[recv] -= 1;
                if waits[recv] == 0 {
                    heap.push(Reverse((ready[recv], recv as u32)));
                }
            }

            let (lo, hi) = (self.dependents_start[i] as usize, self.dependents_start[i + 1] as usize);
            for &d in &self.dependents[lo..hi] {
                let d = d as usize;
                ready[d] = ready[d].max(finish);
                waits[d] -= 1;
                if waits[d] == 0 {
                    heap.push(Reverse((ready[d], d as u32)));
                }
            }
        }

        if done < n {
            return Err(Error::Deadlock(self.blocked(&waits)));
        }

        let per_op_times = timings.map(|t| {
            (0..self.nranks)
                .map(|r| t[self.offsets[r]..self.offsets[r + 1]].to_vec())
                .collect()
        });
        Ok(SimResult {
            completion: per_rank.iter().copied().max().unwrap_or(0),
            per_rank_completion: per_rank,
            per_op_times,
            draws_used: draws,
        })
    }

    fn blocked(&self, waits: &[u32]) -> Vec<String> {
        const SHOWN: usize = 16;
        let stuck: Vec<usize> = (0..self.op_count()).filter(|&i| waits[i] > 0).collect();
        let mut out: Vec<String> = stuck
            .iter()
            .take(SHOWN)
            .map(|&i| {
                let rank = self.ranks[i] as usize;
                let local = i - self.offsets[rank];
                let what = match self.kinds[i] {
                    OpKind::Send { peer, size } => format!("send {size}b to {peer}"),
                    OpKind::Recv { peer, size } => format!("recv {size}b from {peer}"),
                    OpKind::Calc { duration } => format!("calc {duration}"),
                };
                format!("rank {rank} op {local} ({what})")
            })
            .collect();
        if stuck.len() > SHOWN {
            out.push(format!("... and {} more", stuck.len() - SHOWN));
        }
        out
    }
}

/// Executes `s` once. The random stream is seeded with `cfg.seed` itself.
pub fn simulate(s: &Schedule, cfg: &SimConfig) -> Result<SimResult> {
    Program::compile(s)?.run(cfg, cfg.seed)
}

/// Executes `s` `n` times; run `i` uses seed [`derive_seed`]`(cfg.seed, i)`.
/// Runs are spread over the rayon pool and returned in run order.
pub fn run_many(s: &Schedule, cfg: &SimConfig, n: usize) -> Result<Vec<SimResult>> {
    if n == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let program = Program::compile(s)?;
    run_program_many(&program, cfg, n)
}

pub fn run_program_many(program: &Program, cfg: &SimConfig, n: usize) -> Result<Vec<SimResult>> {
    if cfg.noise.is_noiseless() {
        // Every run would be identical.
        let one = program.run(cfg, derive_seed(cfg.seed, 0))?;
        return Ok(vec![one; n]);
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| program.run(cfg, derive_seed(cfg.seed, i)))
        .collect()
}

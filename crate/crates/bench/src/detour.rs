//! Selfish-detour OS noise benchmark: a tight loop of clock reads in which
//! any unusually long iteration is attributed to the OS.

use std::time::{Duration, Instant};

use nsim_core::model::Detour;
use nsim_core::{DetourTrace, Error, Result};

pub const DEFAULT_MULTIPLIER: u64 = 9;
pub const DEFAULT_PROBE_ITERATIONS: usize = 10_000;
pub const DEFAULT_TARGET_RECORDS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetourPlan {
    pub target_records: usize,
    pub threshold_multiplier: u64,
    pub probe_iterations: usize,
    /// Stop recording after this long even if fewer records were found.
    pub max_duration: Option<Duration>,
}

impl Default for DetourPlan {
    fn default() -> Self {
        DetourPlan {
            target_records: DEFAULT_TARGET_RECORDS,
            threshold_multiplier: DEFAULT_MULTIPLIER,
            probe_iterations: DEFAULT_PROBE_ITERATIONS,
            max_duration: None,
        }
    }
}

/// Iterations longer than `multiplier * t_min`, as detours of length
/// `duration - t_min` starting where the iteration started. Iterations are
/// assumed back to back, so iteration `i` starts at the sum of the ones
/// before it.
pub fn detect_detours(durations: &[u64], t_min: u64, multiplier: u64) -> Vec<Detour> {
    let threshold = multiplier.saturating_mul(t_min);
    let mut at = 0;
    let mut out = Vec::new();
    for &d in durations {
        if d > threshold {
            out.push(Detour {
                start_offset: at,
                duration: d - t_min,
            });
        }
        at += d;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetourRun {
    pub t_min: u64,
    pub trace: DetourTrace,
    /// False when `max_duration` cut recording short.
    pub complete: bool,
}

pub fn selfish_detour(plan: &DetourPlan) -> Result<DetourRun> {
    if plan.threshold_multiplier < 2 {
        return Err(Error::InvalidArgument("threshold multiplier must be at least 2".into()));
    }
    if plan.probe_iterations == 0 || plan.target_records == 0 {
        return Err(Error::InvalidArgument(
            "probe iterations and target records must be positive".into(),
        ));
    }
    let origin = Instant::now();
    let ns = |t: Instant| t.duration_since(origin).as_nanos() as u64;

    let mut t_min = u64::MAX;
    let mut resolution = u64::MAX;
    let mut prev = ns(Instant::now());
    for _ in 0..plan.probe_iterations {
        let now = ns(Instant::now());
        let d = now - prev;
        t_min = t_min.min(d);
        if d > 0 {
            resolution = resolution.min(d);
        }
        prev = now;
    }
    // A zero-length iteration means the loop is faster than the clock can
    // tell apart, so detour lengths would be meaningless.
    if t_min == 0 || resolution > t_min {
        return Err(Error::InvalidArgument(format!(
            "clock resolution ({} ns) is coarser than the loop iteration; refusing to measure",
            if resolution == u64::MAX { 0 } else { resolution }
        )));
    }

    let threshold = plan.threshold_multiplier * t_min;
    let mut events = Vec::with_capacity(plan.target_records);
    let start = ns(Instant::now());
    let mut prev = start;
    let mut complete = true;
    let deadline = plan.max_duration.map(|d| d.as_nanos() as u64 + start);
    while events.len() < plan.target_records {
        let now = ns(Instant::now());
        let d = now - prev;
        if d > threshold {
            events.push(Detour {
                start_offset: prev - start,
                duration: d - t_min,
            });
            if deadline.is_some_and(|end| now >= end) {
                complete = events.len() >= plan.target_records;
                break;
            }
        } else if deadline.is_some_and(|end| now >= end) {
            complete = false;
            break;
        }
        prev = now;
    }
    let span = prev.max(ns(Instant::now())) - start + 1;
    Ok(DetourRun {
        t_min,
        trace: DetourTrace::new(events, span)?,
        complete,
    })
}

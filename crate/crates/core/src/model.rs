//! LogGP machine parameters, empirical noise distributions and OS detour
//! traces.
//!
//! All simulated time is integer nanoseconds. The per-byte gap `G` is the
//! only real-valued parameter; products involving it are rounded half-up to
//! whole nanoseconds before they become event times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::SampleTrace;

/// Rounds a non-negative duration to the nearest nanosecond, ties upwards.
pub fn round_half_up(x: f64) -> u64 {
    debug_assert!(x >= 0.0 || x.is_nan());
    (x + 0.5).floor().max(0.0) as u64
}

/// The LogGP parameter set: latency `L`, per-message host overhead `o`,
/// inter-message gap `g` and per-byte gap `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGPParams {
    #[serde(rename = "L")]
    pub latency: u64,
    #[serde(rename = "o")]
    pub overhead: u64,
    #[serde(rename = "g")]
    pub gap: u64,
    /// Nanoseconds per byte.
    #[serde(rename = "G")]
    pub gap_per_byte: f64,
}

impl LogGPParams {
    pub fn new(latency: u64, overhead: u64, gap: u64, gap_per_byte: f64) -> Result<Self> {
        let params = LogGPParams {
            latency,
            overhead,
            gap,
            gap_per_byte,
        };
        params.check()?;
        Ok(params)
    }

    /// Checks the invariants that the integer fields cannot express.
    pub fn check(&self) -> Result<()> {
        if !(self.gap_per_byte >= 0.0) || !self.gap_per_byte.is_finite() {
            return Err(Error::invalid(format!(
                "G must be finite and >= 0, got {}",
                self.gap_per_byte
            )));
        }
        Ok(())
    }

    /// Time spent on the wire by the bytes after the first one, `(s-1)G`,
    /// rounded to whole nanoseconds.
    pub fn transfer_time(&self, size: u64) -> u64 {
        transfer_time(size, self.gap_per_byte)
    }
}

pub(crate) fn transfer_time(size: u64, gap_per_byte: f64) -> u64 {
    round_half_up(size.saturating_sub(1) as f64 * gap_per_byte)
}

/// End-to-end time of a single message: `2o + L + (size-1)G`.
pub fn message_time(params: &LogGPParams, size: u64) -> Result<u64> {
    if size == 0 {
        return Err(Error::invalid("message size must be at least 1 byte"));
    }
    Ok(2 * params.overhead + params.latency + params.transfer_time(size))
}

/// Converts a bandwidth in Gb/s to a per-byte gap in ns/byte.
#[allow(non_snake_case)]
pub fn bandwidth_to_G(gbps: f64) -> Result<f64> {
    if !(gbps > 0.0) || !gbps.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {gbps} Gb/s")));
    }
    Ok(8.0 / gbps)
}

/// Result of fitting LogGP parameters to two ping-pong traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: LogGPParams,
    pub o_fraction: f64,
    /// Set when the large-message minimum was below the small-message
    /// minimum and `G` was forced to zero.
    pub degenerate: bool,
}

pub const DEFAULT_O_FRACTION: f64 = 0.5;

/// Fits LogGP parameters from a 1-byte RTT/2 trace and an RTT/2 trace at
/// `large_size` bytes.
///
/// The base one-way time `t1 = min(small)` is split so that
/// `o = round(o_fraction * t1 / 2)` and `L = t1 - 2o`; `G` is the slope
/// between the two minima and `g` defaults to `o`.
pub fn calibrate(small: &SampleTrace, large: &SampleTrace, large_size: u64, o_fraction: f64) -> Result<Calibration> {
    if small.is_empty() || large.is_empty() {
        return Err(Error::invalid("calibration traces must be non-empty"));
    }
    if large_size <= 1 {
        return Err(Error::invalid("large message size must exceed 1 byte"));
    }
    if !(0.0..=1.0).contains(&o_fraction) {
        return Err(Error::invalid(format!(
            "o_fraction must lie in [0, 1], got {o_fraction}"
        )));
    }
    let t1 = small.min_value();
    let t_large = large.min_value();
    let base = round_half_up(t1);
    let overhead = round_half_up(o_fraction * t1 / 2.0).min(base / 2);
    let latency = base - 2 * overhead;
    let slope = (t_large - t1) / (large_size - 1) as f64;
    let degenerate = slope < 0.0;
    if degenerate {
        log_warning(&format!(
            "calibration degenerate: large-message minimum {t_large} ns is below \
             small-message minimum {t1} ns; using G = 0"
        ));
    }
    Ok(Calibration {
        params: LogGPParams {
            latency,
            overhead,
            gap: overhead,
            gap_per_byte: slope.max(0.0),
        },
        o_fraction,
        degenerate,
    })
}

fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Measurement unit of a trace or distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "ns")]
    Nanoseconds,
    #[serde(rename = "gbps")]
    Gbps,
    #[serde(rename = "ns_per_byte")]
    NsPerByte,
    /// Dimensionless, e.g. a trace normalised to its minimum.
    #[serde(rename = "ratio")]
    Ratio,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Nanoseconds => "ns",
            Unit::Gbps => "gbps",
            Unit::NsPerByte => "ns_per_byte",
            Unit::Ratio => "ratio",
        }
    }

    /// Whether values in this unit must be strictly positive.
    pub fn requires_positive(self) -> bool {
        !matches!(self, Unit::Ratio)
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ns" => Ok(Unit::Nanoseconds),
            "gbps" => Ok(Unit::Gbps),
            "ns_per_byte" => Ok(Unit::NsPerByte),
            "ratio" => Ok(Unit::Ratio),
            other => Err(Error::invalid(format!("unknown unit '{other}'"))),
        }
    }
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sorted measured samples, sampled by the step-function inverse ECDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    unit: Unit,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>, unit: Unit) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("distribution needs at least one sample"));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {bad}")));
        }
        samples.sort_by(f64::total_cmp);
        if unit.requires_positive() && samples[0] <= 0.0 {
            return Err(Error::invalid(format!(
                "samples in unit {unit} must be positive, minimum is {}",
                samples[0]
            )));
        }
        Ok(EmpiricalDistribution { samples, unit })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// Inverse-ECDF lookup: `samples[floor(u * count)]` for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::invalid(format!("quantile {u} outside [0, 1)")));
        }
        Ok(self.sample_unchecked(u))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, u: f64) -> f64 {
        let idx = (u * self.samples.len() as f64) as usize;
        self.samples[idx.min(self.samples.len() - 1)]
    }
}

/// One OS detour: the host is unavailable during
/// `[start_offset, start_offset + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detour {
    pub start_offset: u64,
    pub duration: u64,
}

/// A finite trace of OS detours, replayed cyclically with period `span`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetourTrace")]
pub struct DetourTrace {
    events: Vec<Detour>,
    span: u64,
    /// `prefix[i]` is the summed duration of `events[..i]`.
    #[serde(skip_serializing)]
    prefix: Vec<u64>,
}

#[derive(Deserialize)]
struct RawDetourTrace {
    events: Vec<Detour>,
    span: u64,
}

impl TryFrom<RawDetourTrace> for DetourTrace {
    type Error = Error;

    fn try_from(raw: RawDetourTrace) -> Result<Self> {
        DetourTrace::new(raw.events, raw.span)
    }
}

impl DetourTrace {
    pub fn new(events: Vec<Detour>, span: u64) -> Result<Self> {
        if span == 0 {
            return Err(Error::invalid("detour trace span must be positive"));
        }
        let mut prev_end = 0u64;
        for (i, ev) in events.iter().enumerate() {
            if ev.duration == 0 {
                return Err(Error::invalid(format!("detour {i} has zero duration")));
            }
            if ev.start_offset < prev_end {
                return Err(Error::invalid(format!(
                    "detour {i} starts at {} before the previous one ends at {prev_end}",
                    ev.start_offset
                )));
            }
            prev_end = ev.start_offset + ev.duration;
            if prev_end > span {
                return Err(Error::invalid(format!(
                    "detour {i} ends at {prev_end}, beyond the trace span {span}"
                )));
            }
        }
        let mut prefix = Vec::with_capacity(events.len() + 1);
        prefix.push(0);
        for ev in &events {
            prefix.push(prefix.last().unwrap() + ev.duration);
        }
        if *prefix.last().unwrap() >= span {
            return Err(Error::invalid(
                "detours cover the whole trace span; the host would never run",
            ));
        }
        Ok(DetourTrace { events, span, prefix })
    }

    pub fn events(&self) -> &[Detour] {
        &self.events
    }

    pub fn span(&self) -> u64 {
        self.span
    }

    pub fn total_detour(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    /// Detour time inside `[0, x)` of the infinite cyclic replay.
    pub fn detour_before(&self, x: u64) -> u64 {
        let cycles = x / self.span;
        let pos = x % self.span;
        cycles * self.total_detour() + self.detour_within_span(pos)
    }

    fn detour_within_span(&self, pos: u64) -> u64 {
        // Events starting strictly before `pos` contribute.
        let n = self.events.partition_point(|ev| ev.start_offset < pos);
        if n == 0 {
            return 0;
        }
        let last = self.events[n - 1];
        let partial = (pos - last.start_offset).min(last.duration);
        self.prefix[n - 1] + partial
    }

    /// Detour time overlapping `[from, to)` when the trace is shifted by
    /// `phase`.
    pub fn overlap(&self, from: u64, to: u64, phase: u64) -> u64 {
        if to <= from {
            return 0;
        }
        self.detour_before(to + phase) - self.detour_before(from + phase)
    }

    /// End of a host occupancy that starts at `start` and needs `work` ns of
    /// undisturbed host time, i.e. the least fixed point of
    /// `end = start + work + overlap(start, end)`.
    pub fn occupy(&self, start: u64, work: u64, phase: u64) -> u64 {
        if self.events.is_empty() || work == 0 {
            return start + work;
        }
        let n = self.events.len();
        let mut x = start + phase;
        let mut remaining = work;
        let mut cycle = x / self.span;
        let pos = x % self.span;
        let mut i = self.events.partition_point(|ev| ev.start_offset + ev.duration <= pos);
        loop {
            if i == n {
                i = 0;
                cycle += 1;
            }
            let ev = self.events[i];
            let ev_start = cycle * self.span + ev.start_offset;
            if x < ev_start {
                if x + remaining <= ev_start {
                    return x + remaining - phase;
                }
                remaining -= ev_start - x;
            }
            x = x.max(ev_start + ev.duration);
            i += 1;
        }
    }

    /// Reference form of [`occupy`](Self::occupy) that iterates the
    /// extension rule literally. Slow inside long detours.
    pub fn occupy_by_iteration(&self, start: u64, work: u64, phase: u64) -> u64 {
        let mut end = start + work;
        loop {
            let next = start + work + self.overlap(start, end, phase);
            if next == end {
                return end;
            }
            end = next;
        }
    }
}

/// The noise sources applied during a simulation. All absent means a
/// noiseless run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// One-way small-message times (ns) that replace `2o + L`.
    pub latency: Option<EmpiricalDistribution>,
    /// Achieved bandwidths (Gb/s), converted to `G` per message.
    pub bandwidth: Option<EmpiricalDistribution>,
    pub os: Option<DetourTrace>,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn is_noiseless(&self) -> bool {
        self.latency.is_none() && self.bandwidth.is_none() && self.os.is_none()
    }

    pub fn check(&self) -> Result<()> {
        if let Some(lat) = &self.latency {
            if lat.unit() != Unit::Nanoseconds {
                return Err(Error::invalid(format!(
                    "latency noise must be in ns, got {}",
                    lat.unit()
                )));
            }
        }
        if let Some(bw) = &self.bandwidth {
            if bw.unit() != Unit::Gbps {
                return Err(Error::invalid(format!(
                    "bandwidth noise must be in gbps, got {}",
                    bw.unit()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SampleTrace;

    fn params(l: u64, o: u64, g: u64, big_g: f64) -> LogGPParams {
        LogGPParams::new(l, o, g, big_g).unwrap()
    }

    #[test]
    fn message_time_examples() {
        let p = params(5000, 1000, 0, 0.01);
        assert_eq!(message_time(&p, 1).unwrap(), 7000);
        assert_eq!(message_time(&p, 1_000_001).unwrap(), 17000);
        let zero = params(0, 0, 0, 0.0);
        for size in [1, 2, 1 << 20, u32::MAX as u64] {
            assert_eq!(message_time(&zero, size).unwrap(), 0);
        }
        assert!(matches!(message_time(&p, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn message_time_rounds_half_up() {
        let p = params(0, 0, 0, 0.5);
        assert_eq!(message_time(&p, 2).unwrap(), 1); // 0.5 -> 1
        assert_eq!(message_time(&p, 4).unwrap(), 2); // 1.5 -> 2
        let p = params(0, 0, 0, 0.25);
        assert_eq!(message_time(&p, 2).unwrap(), 0); // 0.25 -> 0
    }

    #[test]
    fn negative_or_nan_gap_per_byte_rejected() {
        assert!(LogGPParams::new(0, 0, 0, -0.1).is_err());
        assert!(LogGPParams::new(0, 0, 0, f64::NAN).is_err());
        // g < o is allowed.
        assert!(LogGPParams::new(10, 100, 5, 0.0).is_ok());
    }

    #[test]
    fn bandwidth_conversion() {
        assert!((bandwidth_to_G(100.0).unwrap() - 0.08).abs() < 1e-15);
        assert_eq!(bandwidth_to_G(8.0).unwrap(), 1.0);
        // 8 / 78.74 computed by hand: 0.101600203200406...
        assert!((bandwidth_to_G(78.74).unwrap() - 0.101_600_203_200_406_4).abs() < 1e-12);
        assert!(bandwidth_to_G(0.0).is_err());
        assert!(bandwidth_to_G(-1.0).is_err());
    }

    fn trace(values: &[f64]) -> SampleTrace {
        SampleTrace::from_values(values.to_vec(), Unit::Nanoseconds).unwrap()
    }

    #[test]
    fn calibrate_example() {
        let size = 16u64 << 20;
        let cal = calibrate(&trace(&[1300.0, 1190.0]), &trace(&[1_398_000.0]), size, 0.5).unwrap();
        // o = round_half_up(0.5 * 1190 / 2) = round_half_up(297.5) = 298
        assert_eq!(cal.params.overhead, 298);
        assert_eq!(cal.params.latency, 1190 - 596);
        assert_eq!(cal.params.gap, 298);
        let expected_g = 1_396_810.0 / 16_777_215.0;
        assert!((cal.params.gap_per_byte - expected_g).abs() < 1e-15);
        assert!(!cal.degenerate);
        assert_eq!(message_time(&cal.params, 1).unwrap(), 1190);
    }

    #[test]
    fn calibrate_edge_cases() {
        let cal = calibrate(&trace(&[500.0]), &trace(&[500.0]), 2, 0.5).unwrap();
        assert_eq!(cal.params.gap_per_byte, 0.0);
        assert!(!cal.degenerate);

        let cal = calibrate(&trace(&[1190.0]), &trace(&[2000.0]), 1024, 0.0).unwrap();
        assert_eq!(cal.params.overhead, 0);
        assert_eq!(cal.params.latency, 1190);

        let cal = calibrate(&trace(&[1000.0]), &trace(&[900.0]), 1024, 0.5).unwrap();
        assert!(cal.degenerate);
        assert_eq!(cal.params.gap_per_byte, 0.0);

        assert!(calibrate(&trace(&[1.0]), &trace(&[2.0]), 1, 0.5).is_err());
        assert!(calibrate(&trace(&[1.0]), &trace(&[2.0]), 8, 1.5).is_err());
    }

    #[test]
    fn sample_examples() {
        let d = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0], Unit::Nanoseconds).unwrap();
        assert_eq!(d.samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.sample(0.5).unwrap(), 2.0);
        let single = EmpiricalDistribution::new(vec![7.0], Unit::Nanoseconds).unwrap();
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(single.sample(u).unwrap(), 7.0);
        }
        let d4 = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0, 4.0], Unit::Gbps).unwrap();
        assert_eq!(d4.sample(0.999).unwrap(), 4.0);
        assert_eq!(d4.sample(0.0).unwrap(), 1.0);
        assert!(d4.sample(1.0).is_err());
        assert!(d4.sample(-0.1).is_err());
    }

    #[test]
    fn distribution_invariants_enforced() {
        assert!(EmpiricalDistribution::new(vec![], Unit::Nanoseconds).is_err());
        assert!(EmpiricalDistribution::new(vec![0.0, 1.0], Unit::Nanoseconds).is_err());
        assert!(EmpiricalDistribution::new(vec![1.0, f64::NAN], Unit::Gbps).is_err());
        assert!(EmpiricalDistribution::new(vec![0.0, 1.0], Unit::Ratio).is_ok());
    }

    fn detours(events: &[(u64, u64)], span: u64) -> Result<DetourTrace> {
        DetourTrace::new(
            events
                .iter()
                .map(|&(start_offset, duration)| Detour { start_offset, duration })
                .collect(),
            span,
        )
    }

    #[test]
    fn detour_trace_validation() {
        assert!(detours(&[(0, 10), (5, 10)], 100).is_err());
        assert!(detours(&[(0, 0)], 100).is_err());
        assert!(detours(&[(95, 10)], 100).is_err());
        assert!(detours(&[(10, 5), (5, 1)], 100).is_err());
        assert!(detours(&[(0, 100)], 100).is_err());
        assert!(detours(&[], 100).is_ok());
    }

    #[test]
    fn detour_overlap_is_periodic() {
        let t = detours(&[(10, 5), (50, 20)], 100).unwrap();
        assert_eq!(t.detour_before(0), 0);
        assert_eq!(t.detour_before(12), 2);
        assert_eq!(t.detour_before(15), 5);
        assert_eq!(t.detour_before(60), 15);
        assert_eq!(t.detour_before(100), 25);
        assert_eq!(t.detour_before(212), 52);
        assert_eq!(t.overlap(0, 100, 0), 25);
        assert_eq!(t.overlap(0, 100, 37), 25);
        assert_eq!(t.overlap(12, 13, 0), 1);
    }

    #[test]
    fn occupy_extends_to_fixed_point() {
        let t = detours(&[(10, 5), (50, 20)], 100).unwrap();
        // No detour in [0, 5).
        assert_eq!(t.occupy(0, 5, 0), 5);
        // [0, 20) hits the first detour: 5 more ns of work, ending at 25.
        assert_eq!(t.occupy(0, 20, 0), 25);
        // [40, 60) -> overlaps [50, 70): extended until 40 + 20 + 20 = 80.
        assert_eq!(t.occupy(40, 20, 0), 80);
        // Phase shift moves the detours.
        assert_eq!(t.occupy(0, 5, 8), 10);
        // Starting inside a detour waits it out.
        assert_eq!(t.occupy(12, 1, 0), 16);
        // Zero work inside a detour still finishes at the call site.
        assert_eq!(t.occupy(12, 0, 0), 12);
        // Crosses a period boundary into the detour at 110.
        assert_eq!(t.occupy(95, 30, 0), 95 + 30 + 5);
    }

    proptest::proptest! {
        #[test]
        fn occupy_matches_literal_iteration(
            raw in proptest::collection::vec((1u64..40, 1u64..30), 0..8),
            start in 0u64..2000,
            work in 0u64..500,
            phase_seed in 0u64..10_000,
        ) {
            let mut events = Vec::new();
            let mut cursor = 0;
            for (gap, dur) in raw {
                events.push(Detour { start_offset: cursor + gap, duration: dur });
                cursor += gap + dur;
            }
            let span = cursor + 7;
            let trace = DetourTrace::new(events, span).unwrap();
            let phase = phase_seed % span;
            proptest::prop_assert_eq!(
                trace.occupy(start, work, phase),
                trace.occupy_by_iteration(start, work, phase)
            );
        }
    }
}

//! Measurement traces: CSV ingestion, empirical distributions and the
//! normalisation/filtering used for reporting.
//!
//! Trace files are plain CSV with the header `timestamp_ns,value,unit`.
//! Values are kept raw; normalisation produces a new trace in unit `ratio`.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{round_half_up, Detour, DetourTrace, EmpiricalDistribution, Unit};

pub const TRACE_HEADER: &str = "timestamp_ns,value,unit";

/// One measurement: a timestamp relative to the trace start and a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp_ns: u64,
    pub value: f64,
}

/// A sample-by-sample measurement trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    rows: Vec<TraceRow>,
    unit: Unit,
}

impl SampleTrace {
    pub fn new(rows: Vec<TraceRow>, unit: Unit) -> Result<Self> {
        for (i, pair) in rows.windows(2).enumerate() {
            if pair[1].timestamp_ns < pair[0].timestamp_ns {
                return Err(Error::invalid(format!(
                    "row {}: timestamp {} goes backwards",
                    i + 1,
                    pair[1].timestamp_ns
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            check_value(row.value, unit).map_err(|msg| Error::invalid(format!("row {i}: {msg}")))?;
        }
        Ok(SampleTrace { rows, unit })
    }

    /// Builds a trace whose timestamps are the sample indices.
    pub fn from_values(values: Vec<f64>, unit: Unit) -> Result<Self> {
        let rows = values
            .into_iter()
            .enumerate()
            .map(|(i, value)| TraceRow {
                timestamp_ns: i as u64,
                value,
            })
            .collect();
        Self::new(rows, unit)
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.value)
    }

    /// Smallest value, or NaN for an empty trace.
    pub fn min_value(&self) -> f64 {
        self.values().fold(f64::NAN, f64::min)
    }

    /// Largest value, or NaN for an empty trace.
    pub fn max_value(&self) -> f64 {
        self.values().fold(f64::NAN, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{},{},{}", row.timestamp_ns, row.value, self.unit)?;
        }
        out.flush()
    }
}

fn check_value(value: f64, unit: Unit) -> std::result::Result<(), String> {
    if !value.is_finite() {
        return Err(format!("non-finite value {value}"));
    }
    if unit.requires_positive() && value <= 0.0 {
        return Err(format!("value {value} must be positive for unit {unit}"));
    }
    Ok(())
}

/// Reads a trace CSV file, checking every row against `expected_unit`.
pub fn load_trace(path: impl AsRef<Path>, expected_unit: Unit) -> Result<SampleTrace> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    parse_trace(file, path, expected_unit)
}

/// Parses trace CSV from any reader. `origin` only labels error messages.
pub fn parse_trace<R: Read>(input: R, origin: &Path, expected_unit: Unit) -> Result<SampleTrace> {
    let err = |line: usize, msg: String| Error::Trace {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut saw_header = false;
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            if line.trim() == TRACE_HEADER {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(
                lineno,
                format!("expected 3 fields `{TRACE_HEADER}`, found {}", fields.len()),
            ));
        }
        let timestamp_ns: u64 = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("bad timestamp '{}'", fields[0])))?;
        let value: f64 = fields[1]
            .parse()
            .map_err(|_| err(lineno, format!("bad value '{}'", fields[1])))?;
        let unit: Unit = fields[2]
            .parse()
            .map_err(|_| err(lineno, format!("unknown unit '{}'", fields[2])))?;
        if unit != expected_unit {
            return Err(err(
                lineno,
                format!("unit mismatch: expected {expected_unit}, found {unit}"),
            ));
        }
        check_value(value, unit).map_err(|msg| err(lineno, msg))?;
        if let Some(prev) = rows.last() {
            if timestamp_ns < prev.timestamp_ns {
                return Err(err(
                    lineno,
                    format!(
                        "timestamp {timestamp_ns} is earlier than the previous row ({})",
                        prev.timestamp_ns
                    ),
                ));
            }
        }
        rows.push(TraceRow { timestamp_ns, value });
    }
    if rows.is_empty() {
        return Err(err(0, "trace contains no samples".to_string()));
    }
    Ok(SampleTrace {
        rows,
        unit: expected_unit,
    })
}

/// Sorted copy of the trace values, unit preserved.
pub fn build_distribution(trace: &SampleTrace) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::new(trace.values().collect(), trace.unit())
}

/// Divides every value by the trace minimum.
pub fn normalize_min(trace: &SampleTrace) -> Result<SampleTrace> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot normalise an empty trace"));
    }
    let min = trace.min_value();
    if !(min > 0.0) {
        return Err(Error::invalid(format!(
            "cannot normalise by a non-positive minimum ({min})"
        )));
    }
    scale(trace, min)
}

/// Divides every value by the trace maximum.
pub fn normalize_max(trace: &SampleTrace) -> Result<SampleTrace> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot normalise an empty trace"));
    }
    let max = trace.max_value();
    if !(max > 0.0) {
        return Err(Error::invalid(format!(
            "cannot normalise by a non-positive maximum ({max})"
        )));
    }
    scale(trace, max)
}

fn scale(trace: &SampleTrace, by: f64) -> Result<SampleTrace> {
    let rows = trace
        .rows
        .iter()
        .map(|r| TraceRow {
            timestamp_ns: r.timestamp_ns,
            value: r.value / by,
        })
        .collect();
    SampleTrace::new(rows, Unit::Ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Largest,
    Smallest,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "largest" => Ok(Side::Largest),
            "smallest" => Ok(Side::Smallest),
            other => Err(Error::invalid(format!(
                "side must be 'largest' or 'smallest', got '{other}'"
            ))),
        }
    }
}

/// Number of rows kept by [`top_fraction`]: `ceil(frac * n)`, at least one.
pub fn top_count(n: usize, frac: f64) -> usize {
    let x = frac * n as f64;
    // 0.07 * 100 is 7.000000000000001 in binary floating point.
    let k = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    (k as usize).clamp(1.min(n), n)
}

/// Keeps the `ceil(frac * n)` most extreme rows on `side`, in their
/// original order. Ties at the cut go to the earlier timestamp.
pub fn top_fraction(trace: &SampleTrace, frac: f64, side: Side) -> Result<SampleTrace> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid(format!("fraction {frac} outside (0, 1]")));
    }
    let k = top_count(trace.len(), frac);
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&trace.rows[a], &trace.rows[b]);
        let by_value = match side {
            Side::Largest => rb.value.total_cmp(&ra.value),
            Side::Smallest => ra.value.total_cmp(&rb.value),
        };
        by_value.then(ra.timestamp_ns.cmp(&rb.timestamp_ns)).then(a.cmp(&b))
    });
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(SampleTrace {
        rows: keep.into_iter().map(|i| trace.rows[i]).collect(),
        unit: trace.unit,
    })
}

/// Bandwidth in Gb/s of `size` bytes delivered in `half_rtt_ns`.
pub fn bandwidth_from_rtt(size: u64, half_rtt_ns: f64) -> Result<f64> {
    if !(half_rtt_ns > 0.0) {
        return Err(Error::invalid(format!(
            "half round-trip time must be positive, got {half_rtt_ns}"
        )));
    }
    Ok(8.0 * size as f64 / half_rtt_ns)
}

/// Reads an OS detour trace: each row is `(start, duration)` in ns.
///
/// The replay period comes from an optional `# span_ns=N` line; without it
/// the span ends with the last detour plus one nanosecond.
pub fn load_detour_trace(path: impl AsRef<Path>) -> Result<DetourTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_detour_trace(&text, path)
}

pub fn parse_detour_trace(text: &str, origin: &Path) -> Result<DetourTrace> {
    let span = text.lines().find_map(|l| {
        l.trim()
            .strip_prefix('#')
            .and_then(|rest| rest.trim().strip_prefix("span_ns="))
            .and_then(|v| v.trim().parse::<u64>().ok())
    });
    let trace = parse_trace(text.as_bytes(), origin, Unit::Nanoseconds)?;
    let events: Vec<Detour> = trace
        .rows()
        .iter()
        .map(|r| Detour {
            start_offset: r.timestamp_ns,
            duration: round_half_up(r.value).max(1),
        })
        .collect();
    let last_end = events.last().map(|e| e.start_offset + e.duration).unwrap_or(0);
    DetourTrace::new(events, span.unwrap_or(last_end + 1))
}

pub fn write_detour_trace<W: Write>(trace: &DetourTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "# span_ns={}", trace.span())?;
    writeln!(out, "{TRACE_HEADER}")?;
    for ev in trace.events() {
        writeln!(out, "{},{},ns", ev.start_offset, ev.duration)?;
    }
    out.flush()
}

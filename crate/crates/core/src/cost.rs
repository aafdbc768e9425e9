//! Monetary cost of simulated runs.

use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimResult;

const NS_PER_HOUR: f64 = 3.6e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceLabel {
    Committed,
    OnDemand,
}

impl std::str::FromStr for PriceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "committed" => Ok(PriceLabel::Committed),
            "on_demand" => Ok(PriceLabel::OnDemand),
            other => Err(Error::invalid(format!(
                "price label must be 'committed' or 'on_demand', got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSpec {
    pub provider: String,
    pub instance: String,
    pub label: PriceLabel,
    pub per_node_hour: f64,
}

impl PriceSpec {
    pub fn new(provider: &str, instance: &str, label: PriceLabel, per_node_hour: f64) -> Result<Self> {
        if !(per_node_hour > 0.0) || !per_node_hour.is_finite() {
            return Err(Error::invalid(format!(
                "hourly price must be positive, got {per_node_hour}"
            )));
        }
        Ok(PriceSpec {
            provider: provider.to_string(),
            instance: instance.to_string(),
            label,
            per_node_hour,
        })
    }
}

/// USD for `nodes` nodes running `runtime_ns`, billed linearly.
pub fn run_cost(runtime_ns: u64, nodes: u32, price: &PriceSpec) -> Result<f64> {
    if nodes == 0 {
        return Err(Error::invalid("node count must be at least 1"));
    }
    Ok(runtime_ns as f64 / NS_PER_HOUR * f64::from(nodes) * price.per_node_hour)
}

/// Per-run fractional cost increase over the noiseless run. Price and node
/// count cancel, so this is the runtime ratio minus one.
pub fn relative_increase(noisy: &[SimResult], noiseless: &SimResult) -> Result<Vec<f64>> {
    if noiseless.completion == 0 {
        return Err(Error::invalid("noiseless completion time is zero"));
    }
    let base = noiseless.completion as f64;
    Ok(noisy.iter().map(|r| r.completion as f64 / base - 1.0).collect())
}

/// Parses a `provider,instance,label,usd_per_hour` catalog. Blank lines and
/// `#` comments are ignored.
pub fn parse_catalog<R: Read>(input: R) -> Result<Vec<PriceSpec>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "provider,instance,label,usd_per_hour" {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| Error::invalid(format!("price catalog line {}: {msg}", idx + 1));
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let label: PriceLabel = fields[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let usd: f64 = fields[3]
            .parse()
            .map_err(|_| bad(format!("bad price '{}'", fields[3])))?;
        out.push(PriceSpec::new(fields[0], fields[1], label, usd).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

/// Finds the single catalog entry for `provider`/`label` (and `instance`,
/// when given).
pub fn lookup<'a>(
    catalog: &'a [PriceSpec],
    provider: &str,
    instance: Option<&str>,
    label: PriceLabel,
) -> Result<&'a PriceSpec> {
    let hits: Vec<&PriceSpec> = catalog
        .iter()
        .filter(|p| p.provider.eq_ignore_ascii_case(provider) && p.label == label)
        .filter(|p| instance.is_none_or(|i| p.instance.eq_ignore_ascii_case(i)))
        .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(Error::invalid(format!("no {label:?} price for provider '{provider}'"))),
        many => Err(Error::invalid(format!(
            "{} {label:?} prices for provider '{provider}'; pick an instance from: {}",
            many.len(),
            many.iter().map(|p| p.instance.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

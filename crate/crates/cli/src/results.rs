//! The JSON document written by `sim run` and read by `cost` and `report`.

use std::collections::BTreeMap;

use nsim_core::LogGPParams;
use serde::{Deserialize, Serialize};

pub const RESULTS_SCHEMA: &str = "nsim.results/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseInputs {
    pub latency: Option<InputDigest>,
    pub bandwidth: Option<InputDigest>,
    pub os: Option<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema: String,
    pub generator: String,
    pub schedule_params: BTreeMap<String, String>,
    pub goal: InputDigest,
    pub nranks: u32,
    pub ops: usize,
    pub params: LogGPParams,
    pub noise: NoiseInputs,
    pub seed: u64,
    pub prng: String,
    pub reps: usize,
    pub noiseless_completion_ns: u64,
    /// Wall-clock creation time; the only field that differs between
    /// otherwise identical invocations.
    pub generated_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub run: usize,
    pub completion_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_rank: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub metadata: Metadata,
    pub runs: Vec<Run>,
}

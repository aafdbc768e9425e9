//! Core of the noise simulation toolkit.
//!
//! The crate is organised around the workflow it supports: measured traces
//! are turned into empirical distributions ([`noise`]), combined with LogGP
//! machine parameters ([`model`]), and replayed against a per-rank operation
//! schedule ([`goal`]) by a deterministic discrete-event simulator
//! ([`sim`]). Results are summarised as boxplot statistics ([`report`]) and
//! converted into monetary cost ([`cost`]).

pub mod cost;
pub mod error;
pub mod goal;
pub mod model;
pub mod noise;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
pub use goal::{OpKind, Schedule, ScheduleOp};
pub use model::{DetourTrace, EmpiricalDistribution, LogGPParams, NoiseModel, Unit};
pub use noise::SampleTrace;
pub use sim::{SimConfig, SimResult};

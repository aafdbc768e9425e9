//! Host microbenchmarks that produce noise traces: ping-pong latency and
//! bandwidth over one or more connections, and the selfish-detour OS noise
//! loop. Also a real executor for schedules, used to check simulated
//! predictions against measured runs.

pub mod detour;
pub mod exec;
pub mod pingpong;
pub mod wire;

pub use detour::{detect_detours, selfish_detour, DetourPlan, DetourRun};
pub use exec::execute_schedule;
pub use pingpong::{
    pingpong, pingpong_bidirectional, pingpong_bidirectional_over, pingpong_over, serve, serve_session, split_parts,
    BenchPlan, Mode, Role, SessionSummary, Stream,
};

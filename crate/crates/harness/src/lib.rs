//! Launcher for `tmpc` worlds: runs the example programs on inproc or tcp
//! worlds and measures typed against raw round-trip latency.

pub mod bench;
pub mod config;
pub mod examples;
pub mod launch;

pub use bench::{bench_payload, run_bench, BenchError, BenchReport};
pub use config::{Example, Launch, RunConfig, Transport, UsageError};
pub use examples::{Outcome, RankReport};
pub use launch::{run_bench_example, run_example, spawn_tcp_world, RunOutput};

/// Exit status for command line misuse.
pub const USAGE_EXIT: i32 = 64;

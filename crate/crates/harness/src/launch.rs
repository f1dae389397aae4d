use std::io;
use std::path::Path;
use std::process::{Command, Stdio};

use tmpc::{connect_tcp_world, run_inproc_world, TcpOptions};

use crate::bench;
use crate::config::{Example, Launch, RunConfig, Transport, UsageError};
use crate::examples::{run_rank, Outcome};

/// What a run printed and how it ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub lines: Vec<String>,
    pub outcome: Outcome,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }
}

/// Runs the configured example. Output lines are in rank order, so inproc
/// and tcp runs of the same example print the same thing.
///
/// `Launch::Spawn` re-executes the current program once per rank; use
/// [`spawn_tcp_world`] to name the program explicitly.
pub fn run_example(config: &RunConfig) -> Result<RunOutput, UsageError> {
    config.validate()?;
    if config.example == Example::Bench {
        return Ok(run_bench_example(config.iterations, None));
    }
    Ok(match (config.transport, config.launch) {
        (Transport::Inproc, _) => run_inproc(config),
        (Transport::Tcp, Launch::Rank(rank)) => run_tcp_rank(config, rank),
        (Transport::Tcp, _) => match std::env::current_exe() {
            Ok(exe) => spawn_tcp_world(config, &exe)
                .unwrap_or_else(|e| failed(format!("spawn failed: {e}"))),
            Err(e) => failed(format!("cannot locate own executable: {e}")),
        },
    })
}

fn failed(line: String) -> RunOutput {
    RunOutput {
        lines: vec![line],
        outcome: Outcome::Failure,
    }
}

fn run_inproc(config: &RunConfig) -> RunOutput {
    let seed = config.seed();
    match run_inproc_world(config.ranks, |ep| run_rank(config.example, &ep, seed)) {
        Ok(reports) => RunOutput {
            lines: reports.iter().flat_map(|r| r.prefixed_lines()).collect(),
            outcome: Outcome::combine(reports.iter().map(|r| r.outcome)),
        },
        Err(e) => failed(format!("error: {e}")),
    }
}

fn run_tcp_rank(config: &RunConfig, rank: u32) -> RunOutput {
    let addr = config.rendezvous.as_deref().unwrap_or_default();
    let options = TcpOptions {
        connect_timeout: config.connect_timeout,
    };
    match connect_tcp_world(addr, rank, config.ranks, &options) {
        Ok(ep) => {
            let report = run_rank(config.example, &ep, config.seed());
            RunOutput {
                lines: report.prefixed_lines().collect(),
                outcome: report.outcome,
            }
        }
        Err(e) => failed(format!("rank {rank}: error: {e}")),
    }
}

/// Launches `program run ... --rank r` for every rank and gathers the output
/// of the children in rank order. The children's stderr is passed through.
pub fn spawn_tcp_world(config: &RunConfig, program: &Path) -> io::Result<RunOutput> {
    let mut children = Vec::new();
    for rank in 0..config.ranks {
        let mut cmd = Command::new(program);
        cmd.arg("run")
            .args(["--example", config.example.name()])
            .args(["--ranks", &config.ranks.to_string()])
            .args(["--transport", "tcp"])
            .args([
                "--rendezvous",
                config.rendezvous.as_deref().unwrap_or_default(),
            ])
            .args(["--rank", &rank.to_string()])
            .args([
                "--connect-timeout-ms",
                &config.connect_timeout.as_millis().to_string(),
            ])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(seed) = config.seed {
            cmd.args(["--seed", &seed.to_string()]);
        }
        match cmd.spawn() {
            Ok(child) => children.push(child),
            Err(e) => {
                for mut c in children {
                    let _ = c.kill();
                    let _ = c.wait();
                }
                return Err(e);
            }
        }
    }
    let mut lines = Vec::new();
    let mut outcomes = Vec::new();
    for child in children {
        let out = child.wait_with_output()?;
        lines.extend(
            String::from_utf8_lossy(&out.stdout)
                .lines()
                .map(str::to_owned),
        );
        outcomes.push(Outcome::from_exit_code(out.status.code()));
    }
    Ok(RunOutput {
        lines,
        outcome: Outcome::combine(outcomes),
    })
}

/// Runs the benchmark and optionally writes the report file.
pub fn run_bench_example(iterations: usize, report: Option<&Path>) -> RunOutput {
    match bench::run_bench(iterations) {
        Ok(reports) => {
            let mut lines: Vec<String> = reports.iter().map(ToString::to_string).collect();
            if let Some(path) = report {
                if let Err(e) = bench::write_report(path, &reports) {
                    lines.push(format!("cannot write report {}: {e}", path.display()));
                    return RunOutput {
                        lines,
                        outcome: Outcome::Failure,
                    };
                }
            }
            RunOutput {
                lines,
                outcome: Outcome::Success,
            }
        }
        Err(e) => failed(format!("bench failed: {e}")),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use tmpc::DEFAULT_CONNECT_TIMEOUT;
use tmpc_harness::bench::DEFAULT_ITERATIONS;
use tmpc_harness::{
    run_bench_example, run_example, Example, Launch, RunConfig, RunOutput, UsageError, USAGE_EXIT,
};

#[derive(Parser)]
#[command(
    name = "tmpc",
    version,
    about = "Run typed message-passing examples and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a named example on every rank of a world
    Run(RunArgs),
    /// Compare typed and raw round-trip latency on two inproc ranks
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// scalar, reshape, mismatch, ring or bench
    #[arg(long)]
    example: String,
    #[arg(long, default_value_t = 2)]
    ranks: u32,
    /// inproc or tcp
    #[arg(long, default_value = "inproc")]
    transport: String,
    /// host:port of the rank 0 rendezvous listener
    #[arg(long, env = "TMPC_RENDEZVOUS")]
    rendezvous: Option<String>,
    /// Join a tcp world as this rank
    #[arg(long, conflicts_with = "spawn")]
    rank: Option<u32>,
    /// Launch one process per rank
    #[arg(long)]
    spawn: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "TMPC_CONNECT_TIMEOUT_MS")]
    connect_timeout_ms: Option<u64>,
    #[command(flatten)]
    bench: BenchArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Where to write the report file
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run_config(args: &RunArgs) -> Result<RunConfig, UsageError> {
    let launch = match (args.rank, args.spawn) {
        (Some(r), _) => Launch::Rank(r),
        (None, true) => Launch::Spawn,
        (None, false) => Launch::Local,
    };
    Ok(RunConfig {
        ranks: args.ranks,
        transport: args.transport.parse()?,
        example: args.example.parse()?,
        rendezvous: args.rendezvous.clone(),
        launch,
        seed: args.seed,
        connect_timeout: args
            .connect_timeout_ms
            .map_or(DEFAULT_CONNECT_TIMEOUT, Duration::from_millis),
        iterations: args.bench.iterations,
    })
}

fn bench(args: &BenchArgs) -> Result<RunOutput, UsageError> {
    if args.iterations == 0 {
        return Err(UsageError::ZeroIterations);
    }
    let report = args
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from("tmpc-bench.txt"));
    Ok(run_bench_example(args.iterations, Some(&report)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE_EXIT as u8),
            };
        }
    };
    let result = match &cli.command {
        Cmd::Run(args) => run_config(args).and_then(|cfg| {
            if cfg.example == Example::Bench {
                cfg.validate()?;
                return Ok(run_bench_example(
                    cfg.iterations,
                    args.bench.report.as_deref(),
                ));
            }
            run_example(&cfg)
        }),
        Cmd::Bench(args) => bench(args),
    };
    match result {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE_EXIT as u8)
        }
    }
}

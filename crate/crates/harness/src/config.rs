use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;
use tmpc::{Rank, DEFAULT_CONNECT_TIMEOUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Inproc,
    Tcp,
}

impl FromStr for Transport {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(Transport::Inproc),
            "tcp" => Ok(Transport::Tcp),
            other => Err(UsageError::UnknownTransport(other.to_owned())),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::Inproc => "inproc",
            Transport::Tcp => "tcp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Scalar,
    Reshape,
    Mismatch,
    Ring,
    Bench,
}

impl Example {
    pub const ALL: [Example; 5] = [
        Example::Scalar,
        Example::Reshape,
        Example::Mismatch,
        Example::Ring,
        Example::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Example::Scalar => "scalar",
            Example::Reshape => "reshape",
            Example::Mismatch => "mismatch",
            Example::Ring => "ring",
            Example::Bench => "bench",
        }
    }

    pub fn min_ranks(self) -> u32 {
        match self {
            Example::Ring => 1,
            _ => 2,
        }
    }
}

impl FromStr for Example {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Example::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| UsageError::UnknownExample(s.to_owned()))
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the ranks of a tcp world are brought up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Launch {
    /// Every rank in this process (inproc only).
    Local,
    /// This process is one rank of a world joined separately.
    Rank(Rank),
    /// This process launches one child process per rank.
    Spawn,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("unknown example `{0}` (expected one of scalar, reshape, mismatch, ring, bench)")]
    UnknownExample(String),
    #[error("unknown transport `{0}` (expected inproc or tcp)")]
    UnknownTransport(String),
    #[error("a world needs at least one rank")]
    NoRanks,
    #[error("example `{example}` needs at least {min} ranks, got {ranks}")]
    TooFewRanks {
        example: Example,
        min: u32,
        ranks: u32,
    },
    #[error("tcp transport requires --rendezvous or TMPC_RENDEZVOUS")]
    MissingRendezvous,
    #[error("tcp transport requires either --rank or --spawn")]
    MissingLaunchMode,
    #[error("--rank and --spawn only apply to the tcp transport")]
    LaunchWithoutTcp,
    #[error("rank {rank} is out of range for a world of {ranks}")]
    RankOutOfRange { rank: Rank, ranks: u32 },
    #[error("the bench example runs on 2 inproc ranks")]
    BenchShape,
    #[error("iteration count must be at least 1")]
    ZeroIterations,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub ranks: u32,
    pub transport: Transport,
    pub example: Example,
    pub rendezvous: Option<String>,
    pub launch: Launch,
    pub seed: Option<u64>,
    pub connect_timeout: Duration,
    /// Only used by the bench example.
    pub iterations: usize,
}

impl RunConfig {
    /// An inproc configuration with default settings.
    pub fn inproc(example: Example, ranks: u32) -> Self {
        RunConfig {
            ranks,
            transport: Transport::Inproc,
            example,
            rendezvous: None,
            launch: Launch::Local,
            seed: None,
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
            iterations: crate::bench::DEFAULT_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.ranks == 0 {
            return Err(UsageError::NoRanks);
        }
        if self.ranks < self.example.min_ranks() {
            return Err(UsageError::TooFewRanks {
                example: self.example,
                min: self.example.min_ranks(),
                ranks: self.ranks,
            });
        }
        match (self.transport, self.launch) {
            (Transport::Inproc, Launch::Local) => {}
            (Transport::Inproc, _) => return Err(UsageError::LaunchWithoutTcp),
            (Transport::Tcp, _) if self.rendezvous.is_none() => {
                return Err(UsageError::MissingRendezvous)
            }
            (Transport::Tcp, Launch::Local) => return Err(UsageError::MissingLaunchMode),
            (Transport::Tcp, Launch::Rank(rank)) if rank >= self.ranks => {
                return Err(UsageError::RankOutOfRange {
                    rank,
                    ranks: self.ranks,
                })
            }
            (Transport::Tcp, _) => {}
        }
        if self.example == Example::Bench {
            if self.transport != Transport::Inproc || self.ranks != 2 {
                return Err(UsageError::BenchShape);
            }
            if self.iterations == 0 {
                return Err(UsageError::ZeroIterations);
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

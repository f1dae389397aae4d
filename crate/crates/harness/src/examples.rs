//! The example programs. Each one runs on every rank of a world and reports
//! what that rank observed.

use rand::{Rng, SeedableRng};
use tmpc::FundamentalKind::{F32, I32};
use tmpc::{CommError, CreationError, Endpoint, FlatSignature, Rank, TypedCommunicator};

use crate::config::Example;

/// How a rank (or a whole run) ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Success,
    /// An example that expects an error saw something else.
    WrongOutcome,
    Failure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Failure => 1,
            Outcome::WrongOutcome => 2,
        }
    }

    pub fn from_exit_code(code: Option<i32>) -> Self {
        match code {
            Some(0) => Outcome::Success,
            Some(2) => Outcome::WrongOutcome,
            _ => Outcome::Failure,
        }
    }

    /// Failure dominates, then a wrong outcome.
    pub fn combine(outcomes: impl IntoIterator<Item = Outcome>) -> Outcome {
        outcomes.into_iter().max().unwrap_or(Outcome::Success)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: Rank,
    pub lines: Vec<String>,
    pub outcome: Outcome,
}

impl RankReport {
    /// Output lines prefixed with the rank, as printed by the launcher.
    pub fn prefixed_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.lines
            .iter()
            .map(move |l| format!("rank {}: {l}", self.rank))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Token {
    pub value: u64,
    pub hops: u32,
}

tmpc::impl_equivalence!(Token {
    value: u64,
    hops: u32
});

pub const RESHAPE_VALUES: [[f32; 2]; 3] = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];

/// Runs one rank of `example`. The bench example is not per rank and is
/// rejected here.
pub fn run_rank(example: Example, endpoint: &Endpoint, seed: u64) -> RankReport {
    let mut lines = Vec::new();
    let result = match example {
        Example::Scalar => scalar(endpoint, &mut lines),
        Example::Reshape => reshape(endpoint, &mut lines),
        Example::Mismatch => Ok(mismatch(endpoint, &mut lines)),
        Example::Ring => ring(endpoint, seed, &mut lines),
        Example::Bench => {
            lines.push("bench does not run per rank".to_owned());
            Ok(Outcome::Failure)
        }
    };
    let outcome = result.unwrap_or_else(|e| {
        lines.push(format!("error: {e}"));
        if matches!(e, CommError::Transport(_)) {
            // Release peers still waiting on this rank.
            endpoint.shutdown_world();
        }
        Outcome::Failure
    });
    RankReport {
        rank: endpoint.rank(),
        lines,
        outcome,
    }
}

fn scalar(ep: &Endpoint, out: &mut Vec<String>) -> Result<Outcome, CommError> {
    let comm = TypedCommunicator::<f32>::new(ep)?;
    match ep.rank() {
        0 => {
            let data_to_send: f32 = 42.5;
            comm.send(&data_to_send, 1, 0)?;
            out.push(format!("sent {data_to_send}"));
        }
        1 => {
            let mut received: f32 = 0.0;
            comm.receive(&mut received, 0, 0)?;
            out.push(format!("received {received}"));
            if received != 42.5 {
                out.push("expected 42.5".to_owned());
                return Ok(Outcome::Failure);
            }
        }
        _ => {}
    }
    Ok(Outcome::Success)
}

fn reshape(ep: &Endpoint, out: &mut Vec<String>) -> Result<Outcome, CommError> {
    let comm = TypedCommunicator::<f32>::new(ep)?;
    match ep.rank() {
        0 => {
            comm.send(&RESHAPE_VALUES, 1, 0)?;
            out.push(format!(
                "sent 3x2 {}",
                join(RESHAPE_VALUES.iter().flatten())
            ));
        }
        1 => {
            let mut received = [[0.0_f32; 3]; 2];
            let status = comm.receive(&mut received, 0, 0)?;
            out.push(format!(
                "received 2x3 ({} elements) {}",
                status.count,
                join(received.iter().flatten())
            ));
            let sent: Vec<f32> = RESHAPE_VALUES.iter().flatten().copied().collect();
            let got: Vec<f32> = received.iter().flatten().copied().collect();
            if sent != got {
                out.push("flatten order differs from the sender".to_owned());
                return Ok(Outcome::Failure);
            }
        }
        _ => {}
    }
    Ok(Outcome::Success)
}

/// The error the mismatch example expects on every rank.
pub fn expected_mismatch() -> CreationError {
    CreationError {
        offending_rank: 1,
        reference_signature: FlatSignature::new(vec![F32]),
        offending_signature: FlatSignature::new(vec![I32]),
    }
}

fn mismatch(ep: &Endpoint, out: &mut Vec<String>) -> Outcome {
    let created = if ep.rank() == 1 {
        TypedCommunicator::<i32>::new(ep).map(drop)
    } else {
        TypedCommunicator::<f32>::new(ep).map(drop)
    };
    match created {
        Err(CommError::Creation(e)) if e == expected_mismatch() => {
            out.push(CommError::Creation(e).to_string());
            Outcome::Success
        }
        Err(other) => {
            out.push(format!("unexpected error: {other}"));
            Outcome::WrongOutcome
        }
        Ok(()) => {
            out.push("creation unexpectedly succeeded".to_owned());
            Outcome::WrongOutcome
        }
    }
}

/// Passes a token from rank i to rank i+1 mod n. Each hop adds the
/// receiving rank to the value.
fn ring(ep: &Endpoint, seed: u64, out: &mut Vec<String>) -> Result<Outcome, CommError> {
    let comm = TypedCommunicator::<Token>::new(ep)?;
    let n = ep.world_size();
    let rank = ep.rank();
    let next = (rank + 1) % n;
    let prev = (rank + n - 1) % n;
    if rank == 0 {
        let start = rand::rngs::StdRng::seed_from_u64(seed).gen_range(0..1_000_000u64);
        comm.send(
            &Token {
                value: start,
                hops: 0,
            },
            next,
            0,
        )?;
        out.push(format!("started token value={start}"));
        let mut back = Token::default();
        comm.receive(&mut back, prev, 0)?;
        out.push(format!(
            "token returned value={} hops={}",
            back.value, back.hops
        ));
        let n = u64::from(n);
        let expected = start + n * (n - 1) / 2;
        if back.value != expected || u64::from(back.hops) != n - 1 {
            out.push(format!("expected value={expected} hops={}", n - 1));
            return Ok(Outcome::Failure);
        }
    } else {
        let mut token = Token::default();
        comm.receive(&mut token, prev, 0)?;
        out.push(format!(
            "received token value={} hops={}",
            token.value, token.hops
        ));
        token.value += u64::from(rank);
        token.hops += 1;
        comm.send(&token, next, 0)?;
    }
    Ok(Outcome::Success)
}

fn join<'a>(values: impl Iterator<Item = &'a f32>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_combination() {
        use Outcome::*;
        assert_eq!(Outcome::combine([Success, Success]), Success);
        assert_eq!(Outcome::combine([Success, WrongOutcome]), WrongOutcome);
        assert_eq!(Outcome::combine([WrongOutcome, Failure, Success]), Failure);
        assert_eq!(Outcome::combine([]), Success);
        for o in [Success, WrongOutcome, Failure] {
            assert_eq!(Outcome::from_exit_code(Some(o.exit_code())), o);
        }
        assert_eq!(Outcome::from_exit_code(None), Failure);
    }
}

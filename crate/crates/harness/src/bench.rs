//! Round-trip latency of typed send/receive against the raw transport.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;
use tmpc::{
    run_inproc_world, Buffer, CommError, Endpoint, Frame, FrameKind, TransportError, TypeHash,
    TypedCommunicator,
};

pub const PAYLOAD_SIZES: [usize; 3] = [4, 1024, 1 << 20];
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const MIN_WARMUP: usize = 100;

const TYPED_TAG: u32 = 0;
const RAW_TAG: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub payload_size: usize,
    pub iterations: usize,
    pub typed_median_ns: u64,
    pub raw_median_ns: u64,
    pub overhead_percent: f64,
}

impl BenchReport {
    fn new(payload_size: usize, typed: &mut [u64], raw: &mut [u64]) -> Self {
        let typed_median_ns = median(typed);
        let raw_median_ns = median(raw);
        BenchReport {
            payload_size,
            iterations: typed.len(),
            typed_median_ns,
            raw_median_ns,
            overhead_percent: overhead_percent(typed_median_ns, raw_median_ns),
        }
    }

    /// Typed median as a fraction of the raw median.
    pub fn ratio(&self) -> f64 {
        self.typed_median_ns as f64 / self.raw_median_ns as f64
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "size={} typed={} raw={} overhead={:.2}",
            self.payload_size, self.typed_median_ns, self.raw_median_ns, self.overhead_percent
        )
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("payload size {0} is not a whole number of f32 values")]
    PayloadSize(usize),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("typed message used {typed} wire bytes but raw used {raw}")]
    ByteCountMismatch { typed: u64, raw: u64 },
    #[error("echoed payload differs from the original")]
    Corrupted,
}

pub fn overhead_percent(typed_ns: u64, raw_ns: u64) -> f64 {
    (typed_ns as f64 - raw_ns as f64) / raw_ns as f64 * 100.0
}

fn median(samples: &mut [u64]) -> u64 {
    samples.sort_unstable();
    let mid = samples.len() / 2;
    if samples.len().is_multiple_of(2) {
        (samples[mid - 1] + samples[mid]) / 2
    } else {
        samples[mid]
    }
}

/// Benchmarks every size in [`PAYLOAD_SIZES`].
pub fn run_bench(iterations: usize) -> Result<Vec<BenchReport>, BenchError> {
    PAYLOAD_SIZES
        .iter()
        .map(|&size| bench_payload(size, iterations))
        .collect()
}

/// Measures `iterations` typed and raw round trips of an f32 payload of
/// `size` bytes between two inproc ranks, after a warmup of at least
/// [`MIN_WARMUP`] round trips. The two kinds alternate so that both see the
/// same scheduler and cache conditions.
pub fn bench_payload(size: usize, iterations: usize) -> Result<BenchReport, BenchError> {
    if iterations == 0 {
        return Err(BenchError::ZeroIterations);
    }
    if size == 0 || !size.is_multiple_of(4) {
        return Err(BenchError::PayloadSize(size));
    }
    let warmup = MIN_WARMUP.max(iterations / 10);
    let results = run_inproc_world(2, |ep| {
        let out = if ep.rank() == 0 {
            driver(&ep, size / 4, warmup, iterations).map(Some)
        } else {
            echo(&ep, size / 4, warmup + iterations + 1).map(|()| None)
        };
        if out.is_err() {
            ep.shutdown_world();
        }
        out
    })?;
    let mut first_error = None;
    let mut samples = None;
    for r in results {
        match r {
            Ok(Some(s)) => samples = Some(s),
            Ok(None) => {}
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let (mut typed, mut raw) = samples.expect("rank 0 returns samples");
    Ok(BenchReport::new(size, &mut typed, &mut raw))
}

fn raw_frame(
    comm: &TypedCommunicator<'_, f32>,
    hash: TypeHash,
    count: usize,
    payload: Vec<u8>,
) -> Frame {
    Frame {
        kind: FrameKind::Data,
        source: comm.rank(),
        context: comm.context(),
        tag: RAW_TAG,
        type_hash: hash,
        element_count: count as u64,
        payload,
    }
}

fn driver(
    ep: &Endpoint,
    n: usize,
    warmup: usize,
    iterations: usize,
) -> Result<(Vec<u64>, Vec<u64>), BenchError> {
    let comm = TypedCommunicator::<f32>::new(ep)?;
    let hash = comm.element_hash();
    let data: Vec<f32> = (0..n).map(|i| i as f32 * 0.5).collect();
    let bytes = data.pack();
    let mut typed_back = vec![0.0_f32; n];
    let mut raw_back = vec![0_u8; bytes.len()];

    let typed_round = |back: &mut [f32]| -> Result<(), BenchError> {
        comm.send(&data[..], 1, TYPED_TAG)?;
        comm.receive(back, 1, TYPED_TAG)?;
        Ok(())
    };
    let raw_round = |back: &mut [u8]| -> Result<(), BenchError> {
        ep.send_frame(1, raw_frame(&comm, hash, n, bytes.to_vec()))?;
        let frame = ep.recv_match(FrameKind::Data, 1, comm.context(), RAW_TAG)?;
        back.copy_from_slice(&frame.payload);
        Ok(())
    };

    // Both paths must put the same number of bytes on the wire.
    let s0 = ep.stats().data_wire_bytes;
    typed_round(&mut typed_back)?;
    let s1 = ep.stats().data_wire_bytes;
    raw_round(&mut raw_back)?;
    let s2 = ep.stats().data_wire_bytes;
    if s1 - s0 != s2 - s1 {
        return Err(BenchError::ByteCountMismatch {
            typed: s1 - s0,
            raw: s2 - s1,
        });
    }

    let mut typed = Vec::with_capacity(iterations);
    let mut raw = Vec::with_capacity(iterations);
    for i in 0..warmup + iterations {
        for typed_turn in typed_first(i) {
            let start = Instant::now();
            if typed_turn {
                typed_round(&mut typed_back)?;
            } else {
                raw_round(&mut raw_back)?;
            }
            let ns = start.elapsed().as_nanos() as u64;
            if i >= warmup {
                if typed_turn {
                    typed.push(ns);
                } else {
                    raw.push(ns);
                }
            }
        }
    }
    if typed_back != data || raw_back != bytes {
        return Err(BenchError::Corrupted);
    }
    Ok((typed, raw))
}

fn typed_first(i: usize) -> [bool; 2] {
    if i.is_multiple_of(2) {
        [true, false]
    } else {
        [false, true]
    }
}

/// Rank 1: returns every message to rank 0, through the same API it arrived on.
fn echo(ep: &Endpoint, n: usize, rounds: usize) -> Result<(), BenchError> {
    let comm = TypedCommunicator::<f32>::new(ep)?;
    let hash = comm.element_hash();
    let mut values = vec![0.0_f32; n];
    let mut bytes = vec![0_u8; n * 4];
    let mut typed_round = || -> Result<(), BenchError> {
        comm.receive(&mut values[..], 0, TYPED_TAG)?;
        comm.send(&values[..], 0, TYPED_TAG)?;
        Ok(())
    };
    let mut raw_round = || -> Result<(), BenchError> {
        let frame = ep.recv_match(FrameKind::Data, 0, comm.context(), RAW_TAG)?;
        bytes.copy_from_slice(&frame.payload);
        ep.send_frame(0, raw_frame(&comm, hash, n, bytes.to_vec()))?;
        Ok(())
    };
    // The byte-count check round.
    typed_round()?;
    raw_round()?;
    for i in 0..rounds - 1 {
        for typed_turn in typed_first(i) {
            if typed_turn {
                typed_round()?;
            } else {
                raw_round()?;
            }
        }
    }
    Ok(())
}

/// Writes one report line per payload size.
pub fn write_report(path: &Path, reports: &[BenchReport]) -> io::Result<()> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    fs::write(path, text)
}

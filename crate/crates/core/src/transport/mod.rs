//! Point-to-point frame delivery between the ranks of a world.
//!
//! Every rank owns one [`Endpoint`]. Incoming frames land in the endpoint's
//! mailbox, a single ordered store; [`Endpoint::recv_match`] removes the
//! earliest frame with an exact `(kind, source, context, tag)` key and leaves
//! everything else in place. Frames from one sender reach one receiver in
//! send order, which gives MPI-style non-overtaking per matching key.
//!
//! Two backends share this contract: [`spawn_inproc_world`] (threads in one
//! process) and [`connect_tcp_world`] (one process per rank, full TCP mesh).

mod inproc;
mod tcp;

use std::cell::Cell;
use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::wire::{Frame, FrameKind};

pub use inproc::{run_inproc_world, spawn_inproc_world};
pub use tcp::{connect_tcp_world, TcpOptions, DEFAULT_CONNECT_TIMEOUT};

pub type Rank = u32;
pub type Tag = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("destination rank {dest} out of range for world of size {world_size}")]
    InvalidDestination { dest: Rank, world_size: u32 },
    #[error("source rank {rank} out of range for world of size {world_size}")]
    InvalidSource { rank: Rank, world_size: u32 },
    #[error("rank {rank} out of range for world of size {world_size}")]
    InvalidRank { rank: Rank, world_size: u32 },
    #[error("world size must be at least 1")]
    EmptyWorld,
    #[error("world was shut down")]
    WorldShutdown,
    #[error("connection to rank {peer} lost: {reason}")]
    ConnectionLost { peer: Rank, reason: String },
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("rank {0} claimed by more than one process")]
    DuplicateRank(Rank),
    #[error("peer expects world size {got}, this rank was started with {expected}")]
    WorldSizeMismatch { expected: u32, got: u32 },
    #[error("rendezvous failed: {0}")]
    Rendezvous(String),
}

/// Frames sent by one endpoint, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub data_frames: u64,
    pub descriptor_frames: u64,
    pub verdict_frames: u64,
    /// Encoded size of all data frames, header included.
    pub data_wire_bytes: u64,
    pub data_payload_bytes: u64,
}

impl FrameStats {
    pub fn handshake_frames(&self) -> u64 {
        self.descriptor_frames + self.verdict_frames
    }

    fn record(&mut self, frame: &Frame) {
        match frame.kind {
            FrameKind::Data => {
                self.data_frames += 1;
                self.data_wire_bytes += frame.encoded_len() as u64;
                self.data_payload_bytes += frame.payload.len() as u64;
            }
            FrameKind::HandshakeDescriptor => self.descriptor_frames += 1,
            FrameKind::HandshakeVerdict => self.verdict_frames += 1,
        }
    }
}

impl std::ops::Add for FrameStats {
    type Output = FrameStats;

    fn add(self, o: FrameStats) -> FrameStats {
        FrameStats {
            data_frames: self.data_frames + o.data_frames,
            descriptor_frames: self.descriptor_frames + o.descriptor_frames,
            verdict_frames: self.verdict_frames + o.verdict_frames,
            data_wire_bytes: self.data_wire_bytes + o.data_wire_bytes,
            data_payload_bytes: self.data_payload_bytes + o.data_payload_bytes,
        }
    }
}

impl std::iter::Sum for FrameStats {
    fn sum<I: Iterator<Item = FrameStats>>(iter: I) -> FrameStats {
        iter.fold(FrameStats::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchKey {
    pub kind: FrameKind,
    pub source: Rank,
    pub context: u32,
    pub tag: Tag,
}

impl MatchKey {
    fn matches(&self, f: &Frame) -> bool {
        f.kind == self.kind
            && f.source == self.source
            && f.context == self.context
            && f.tag == self.tag
    }
}

struct MailboxState {
    frames: VecDeque<Frame>,
    // Per-source link state; a closed source can never deliver again.
    closed: Vec<Option<TransportError>>,
    fatal: Option<TransportError>,
}

pub(crate) struct Mailbox {
    state: Mutex<MailboxState>,
    ready: Condvar,
}

impl Mailbox {
    pub(crate) fn new(world_size: u32) -> Self {
        Mailbox {
            state: Mutex::new(MailboxState {
                frames: VecDeque::new(),
                closed: vec![None; world_size as usize],
                fatal: None,
            }),
            ready: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, MailboxState> {
        // A panicking rank thread must not wedge its peers.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn deliver(&self, frame: Frame) {
        self.lock().frames.push_back(frame);
        self.ready.notify_all();
    }

    pub(crate) fn close_source(&self, source: Rank, err: TransportError) {
        let mut st = self.lock();
        if let Some(slot) = st.closed.get_mut(source as usize) {
            slot.get_or_insert(err);
        }
        drop(st);
        self.ready.notify_all();
    }

    pub(crate) fn fail(&self, err: TransportError) {
        self.lock().fatal.get_or_insert(err);
        self.ready.notify_all();
    }

    fn fatal(&self) -> Option<TransportError> {
        self.lock().fatal.clone()
    }

    fn take(&self, key: &MatchKey, deadline: Option<Instant>) -> Result<Frame, TransportError> {
        let mut st = self.lock();
        loop {
            if let Some(pos) = st.frames.iter().position(|f| key.matches(f)) {
                return Ok(st.frames.remove(pos).unwrap());
            }
            if let Some(err) = &st.fatal {
                return Err(err.clone());
            }
            if let Some(Some(err)) = st.closed.get(key.source as usize) {
                return Err(err.clone());
            }
            st = match deadline {
                None => self.ready.wait(st).unwrap_or_else(|e| e.into_inner()),
                Some(deadline) => {
                    let now = Instant::now();
                    if now >= deadline {
                        return Err(TransportError::Timeout(Duration::ZERO));
                    }
                    self.ready
                        .wait_timeout(st, deadline - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0
                }
            };
        }
    }

    fn len(&self) -> usize {
        self.lock().frames.len()
    }
}

enum Links {
    InProc(inproc::InprocLinks),
    Tcp(tcp::TcpLinks),
}

/// One rank's handle on a world.
///
/// An endpoint is driven by a single thread; it can be moved to another
/// thread before use but is not shared.
pub struct Endpoint {
    rank: Rank,
    world_size: u32,
    mailbox: Arc<Mailbox>,
    links: Links,
    stats: Cell<FrameStats>,
    creation_seq: Cell<u32>,
    next_context: Cell<u32>,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("rank", &self.rank)
            .field("world_size", &self.world_size)
            .field(
                "backend",
                &match self.links {
                    Links::InProc(_) => "inproc",
                    Links::Tcp(_) => "tcp",
                },
            )
            .finish()
    }
}

impl Endpoint {
    fn new(rank: Rank, world_size: u32, mailbox: Arc<Mailbox>, links: Links) -> Self {
        Endpoint {
            rank,
            world_size,
            mailbox,
            links,
            stats: Cell::new(FrameStats::default()),
            creation_seq: Cell::new(0),
            next_context: Cell::new(1),
        }
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn world_size(&self) -> u32 {
        self.world_size
    }

    pub fn stats(&self) -> FrameStats {
        self.stats.get()
    }

    /// Number of delivered frames not yet matched by a receive.
    pub fn pending(&self) -> usize {
        self.mailbox.len()
    }

    /// Enqueues `frame` for delivery to `dest`. `frame.source` is overwritten
    /// with this endpoint's rank.
    pub fn send_frame(&self, dest: Rank, mut frame: Frame) -> Result<(), TransportError> {
        if dest >= self.world_size {
            return Err(TransportError::InvalidDestination {
                dest,
                world_size: self.world_size,
            });
        }
        if let Some(err) = self.mailbox.fatal() {
            return Err(err);
        }
        frame.source = self.rank;
        let mut stats = self.stats.get();
        stats.record(&frame);
        match &self.links {
            Links::InProc(links) => links.send(dest, frame)?,
            Links::Tcp(links) => {
                if dest == self.rank {
                    self.mailbox.deliver(frame);
                } else {
                    links.send(dest, &frame)?;
                }
            }
        }
        self.stats.set(stats);
        Ok(())
    }

    /// Blocks until a frame with exactly this key is available and removes
    /// the earliest one.
    pub fn recv_match(
        &self,
        kind: FrameKind,
        source: Rank,
        context: u32,
        tag: Tag,
    ) -> Result<Frame, TransportError> {
        self.recv_key(&self.key(kind, source, context, tag)?, None)
    }

    /// Like [`recv_match`](Self::recv_match) but gives up after `timeout`.
    pub fn recv_match_timeout(
        &self,
        kind: FrameKind,
        source: Rank,
        context: u32,
        tag: Tag,
        timeout: Duration,
    ) -> Result<Frame, TransportError> {
        let key = self.key(kind, source, context, tag)?;
        self.recv_key(&key, Some(Instant::now() + timeout))
            .map_err(|e| match e {
                TransportError::Timeout(_) => TransportError::Timeout(timeout),
                e => e,
            })
    }

    fn key(
        &self,
        kind: FrameKind,
        source: Rank,
        context: u32,
        tag: Tag,
    ) -> Result<MatchKey, TransportError> {
        if source >= self.world_size {
            return Err(TransportError::InvalidSource {
                rank: source,
                world_size: self.world_size,
            });
        }
        Ok(MatchKey {
            kind,
            source,
            context,
            tag,
        })
    }

    fn recv_key(&self, key: &MatchKey, deadline: Option<Instant>) -> Result<Frame, TransportError> {
        self.mailbox.take(key, deadline)
    }

    /// Tears the world down: every rank blocked in a receive (and every later
    /// send or unmatched receive) fails with `WorldShutdown`.
    pub fn shutdown_world(&self) {
        match &self.links {
            Links::InProc(links) => links.shutdown(),
            Links::Tcp(links) => {
                self.mailbox.fail(TransportError::WorldShutdown);
                links.shutdown();
            }
        }
    }

    pub(crate) fn next_creation_seq(&self) -> u32 {
        let seq = self.creation_seq.get();
        self.creation_seq.set(seq.wrapping_add(1));
        seq
    }

    pub(crate) fn allocate_context(&self) -> u32 {
        let ctx = self.next_context.get();
        self.next_context.set(ctx + 1);
        ctx
    }
}

//! TCP backend.
//!
//! Setup is a star followed by a full mesh. Rank 0 listens on the rendezvous
//! address; every other rank binds its own listener, connects to rank 0 and
//! announces `(rank, world_size, listen_port)`. Once all ranks have joined,
//! rank 0 answers each with the peer table, and every pair then opens exactly
//! one connection, lower rank dialing the higher rank's listener. Rendezvous
//! connections are dropped after the table is delivered.
//!
//! Rendezvous messages (little-endian):
//!
//! ```text
//! join:  "TMPR" | version u16 | rank u32 | world_size u32 | listen_port u16
//! reply: status u8 (0 ok, 1 duplicate rank, 2 world size mismatch, 3 bad rank)
//!        ok:    world_size entries of  family u8 (0 none, 4, 6) | ip bytes | port u16
//!        error: detail u32
//! mesh:  "TMPM" | rank u32 | world_size u32
//! ```

use std::io::{self, Read, Write};
use std::net::{
    IpAddr, Ipv4Addr, Ipv6Addr, Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs,
};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::{Endpoint, Links, Mailbox, Rank, TransportError};
use crate::wire::Frame;

pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

const JOIN_MAGIC: &[u8; 4] = b"TMPR";
const MESH_MAGIC: &[u8; 4] = b"TMPM";
const PROTOCOL_VERSION: u16 = 1;

const STATUS_OK: u8 = 0;
const STATUS_DUPLICATE: u8 = 1;
const STATUS_WORLD_SIZE: u8 = 2;
const STATUS_BAD_RANK: u8 = 3;

const POLL_INTERVAL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct TcpOptions {
    /// Deadline for the whole setup: rendezvous plus mesh.
    pub connect_timeout: Duration,
}

impl Default for TcpOptions {
    fn default() -> Self {
        TcpOptions {
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
        }
    }
}

pub(crate) struct TcpLinks {
    writers: Vec<Option<Mutex<TcpStream>>>,
    readers: Mutex<Vec<JoinHandle<()>>>,
    closing: Arc<AtomicBool>,
    mailbox: Arc<Mailbox>,
}

impl TcpLinks {
    pub(crate) fn send(&self, dest: Rank, frame: &Frame) -> Result<(), TransportError> {
        let writer = self.writers[dest as usize]
            .as_ref()
            .expect("no link to self");
        let bytes = frame.encode();
        let mut stream = writer.lock().unwrap_or_else(|e| e.into_inner());
        stream.write_all(&bytes).map_err(|e| {
            let err = TransportError::ConnectionLost {
                peer: dest,
                reason: e.to_string(),
            };
            self.mailbox.fail(err.clone());
            err
        })
    }

    pub(crate) fn shutdown(&self) {
        self.closing.store(true, Ordering::SeqCst);
        for w in self.writers.iter().flatten() {
            let _ = w
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .shutdown(Shutdown::Both);
        }
    }
}

impl Drop for TcpLinks {
    fn drop(&mut self) {
        self.shutdown();
        let readers = std::mem::take(&mut *self.readers.lock().unwrap_or_else(|e| e.into_inner()));
        for r in readers {
            let _ = r.join();
        }
    }
}

struct Deadline {
    at: Instant,
    total: Duration,
}

impl Deadline {
    fn new(total: Duration) -> Self {
        Deadline {
            at: Instant::now() + total,
            total,
        }
    }

    fn remaining(&self) -> Result<Duration, TransportError> {
        let left = self.at.saturating_duration_since(Instant::now());
        if left.is_zero() {
            Err(self.expired())
        } else {
            Ok(left)
        }
    }

    fn expired(&self) -> TransportError {
        TransportError::Timeout(self.total)
    }

    /// Maps I/O errors, treating read/write timeouts as deadline expiry.
    fn io(&self, what: &str) -> impl Fn(io::Error) -> TransportError + '_ {
        let what = what.to_string();
        move |e| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => self.expired(),
            _ => TransportError::Rendezvous(format!("{what}: {e}")),
        }
    }
}

/// Joins (or, for rank 0, hosts) a TCP world and returns this rank's
/// endpoint once the full mesh is up.
pub fn connect_tcp_world<A: ToSocketAddrs>(
    rendezvous: A,
    rank: Rank,
    world_size: u32,
    options: &TcpOptions,
) -> Result<Endpoint, TransportError> {
    if world_size == 0 {
        return Err(TransportError::EmptyWorld);
    }
    if rank >= world_size {
        return Err(TransportError::InvalidRank { rank, world_size });
    }
    let addrs: Vec<SocketAddr> = rendezvous
        .to_socket_addrs()
        .map_err(|e| TransportError::Rendezvous(format!("resolving rendezvous address: {e}")))?
        .collect();
    if addrs.is_empty() {
        return Err(TransportError::Rendezvous(
            "rendezvous address resolved to nothing".into(),
        ));
    }
    let deadline = Deadline::new(options.connect_timeout);
    let peers = if rank == 0 {
        host(&addrs, world_size, &deadline)?
    } else {
        join(&addrs, rank, world_size, &deadline)?
    };
    Ok(assemble(rank, world_size, peers))
}

fn assemble(rank: Rank, world_size: u32, peers: Vec<Option<TcpStream>>) -> Endpoint {
    let mailbox = Arc::new(Mailbox::new(world_size));
    let closing = Arc::new(AtomicBool::new(false));
    let mut readers = Vec::new();
    let mut writers = Vec::new();
    for (peer, stream) in peers.into_iter().enumerate() {
        let Some(stream) = stream else {
            writers.push(None);
            continue;
        };
        let peer = peer as Rank;
        match stream.try_clone() {
            Ok(read_half) => {
                let (mb, closing) = (Arc::clone(&mailbox), Arc::clone(&closing));
                readers.push(thread::spawn(move || {
                    read_loop(read_half, peer, mb, closing)
                }));
            }
            Err(e) => mailbox.fail(TransportError::ConnectionLost {
                peer,
                reason: e.to_string(),
            }),
        }
        writers.push(Some(Mutex::new(stream)));
    }
    let links = TcpLinks {
        writers,
        readers: Mutex::new(readers),
        closing,
        mailbox: Arc::clone(&mailbox),
    };
    Endpoint::new(rank, world_size, mailbox, Links::Tcp(links))
}

fn read_loop(mut stream: TcpStream, peer: Rank, mailbox: Arc<Mailbox>, closing: Arc<AtomicBool>) {
    loop {
        match Frame::read_from(&mut stream) {
            Ok(Some(frame)) if frame.source == peer => mailbox.deliver(frame),
            Ok(Some(frame)) => {
                mailbox.fail(TransportError::ConnectionLost {
                    peer,
                    reason: format!(
                        "frame claims source {} on link from rank {peer}",
                        frame.source
                    ),
                });
                return;
            }
            Ok(None) => {
                // Peer finished cleanly; only receives waiting on it fail.
                mailbox.close_source(
                    peer,
                    TransportError::ConnectionLost {
                        peer,
                        reason: "peer closed the connection".into(),
                    },
                );
                return;
            }
            Err(e) => {
                if !closing.load(Ordering::SeqCst) {
                    mailbox.fail(TransportError::ConnectionLost {
                        peer,
                        reason: e.to_string(),
                    });
                }
                return;
            }
        }
    }
}

fn prepare(stream: &TcpStream) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(None)?;
    stream.set_write_timeout(None)
}

fn read_exact_by(
    stream: &mut TcpStream,
    buf: &mut [u8],
    deadline: &Deadline,
    what: &str,
) -> Result<(), TransportError> {
    stream
        .set_read_timeout(Some(deadline.remaining()?))
        .map_err(deadline.io(what))?;
    stream.read_exact(buf).map_err(deadline.io(what))
}

fn accept_by(listener: &TcpListener, deadline: &Deadline) -> Result<TcpStream, TransportError> {
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream
                    .set_nonblocking(false)
                    .map_err(deadline.io("accept"))?;
                return Ok(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                deadline.remaining()?;
                thread::sleep(POLL_INTERVAL);
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(deadline.io("accept")(e)),
        }
    }
}

fn connect_by(addrs: &[SocketAddr], deadline: &Deadline) -> Result<TcpStream, TransportError> {
    loop {
        for addr in addrs {
            let attempt = deadline.remaining()?.min(Duration::from_secs(1));
            if let Ok(stream) = TcpStream::connect_timeout(addr, attempt) {
                return Ok(stream);
            }
        }
        // The listener may not be up yet.
        deadline.remaining()?;
        thread::sleep(POLL_INTERVAL * 4);
    }
}

fn host(
    addrs: &[SocketAddr],
    world_size: u32,
    deadline: &Deadline,
) -> Result<Vec<Option<TcpStream>>, TransportError> {
    let mut peers: Vec<Option<TcpStream>> = (0..world_size).map(|_| None).collect();
    if world_size == 1 {
        return Ok(peers);
    }
    let listener = TcpListener::bind(addrs)
        .map_err(|e| TransportError::Rendezvous(format!("binding rendezvous listener: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(deadline.io("listener"))?;

    let mut joined: Vec<Option<(TcpStream, SocketAddr)>> = (0..world_size).map(|_| None).collect();
    let mut count = 0;
    let outcome = loop {
        if count == world_size - 1 {
            break Ok(());
        }
        let mut stream = accept_by(&listener, deadline)?;
        let mut hello = [0u8; 16];
        read_exact_by(&mut stream, &mut hello, deadline, "reading join request")?;
        if &hello[0..4] != JOIN_MAGIC
            || u16::from_le_bytes([hello[4], hello[5]]) != PROTOCOL_VERSION
        {
            // Not one of ours; ignore it.
            continue;
        }
        let rank = u32::from_le_bytes(hello[6..10].try_into().unwrap());
        let size = u32::from_le_bytes(hello[10..14].try_into().unwrap());
        let port = u16::from_le_bytes([hello[14], hello[15]]);
        if size != world_size {
            let _ = reply_error(&mut stream, STATUS_WORLD_SIZE, world_size);
            break Err(TransportError::WorldSizeMismatch {
                expected: world_size,
                got: size,
            });
        }
        if rank == 0 || rank >= world_size {
            let _ = reply_error(&mut stream, STATUS_BAD_RANK, rank);
            break Err(TransportError::InvalidRank { rank, world_size });
        }
        if joined[rank as usize].is_some() {
            let _ = reply_error(&mut stream, STATUS_DUPLICATE, rank);
            break Err(TransportError::DuplicateRank(rank));
        }
        let ip = stream
            .peer_addr()
            .map_err(deadline.io("peer address"))?
            .ip();
        joined[rank as usize] = Some((stream, SocketAddr::new(ip, port)));
        count += 1;
    };

    if let Err(err) = outcome {
        let (status, detail) = match &err {
            TransportError::DuplicateRank(r) => (STATUS_DUPLICATE, *r),
            TransportError::InvalidRank { rank, .. } => (STATUS_BAD_RANK, *rank),
            _ => (STATUS_WORLD_SIZE, world_size),
        };
        for (stream, _) in joined.iter_mut().flatten() {
            let _ = reply_error(stream, status, detail);
        }
        return Err(err);
    }

    let mut table = vec![STATUS_OK];
    for entry in &joined {
        match entry {
            None => table.push(0),
            Some((_, addr)) => encode_addr(&mut table, *addr),
        }
    }
    for (stream, _) in joined.iter_mut().flatten() {
        stream
            .write_all(&table)
            .map_err(deadline.io("sending peer table"))?;
    }
    let addrs: Vec<SocketAddr> = joined.iter().flatten().map(|(_, a)| *a).collect();
    drop(joined);

    for (i, addr) in addrs.into_iter().enumerate() {
        let mut stream = connect_by(&[addr], deadline)?;
        stream
            .write_all(&mesh_hello(0, world_size))
            .map_err(deadline.io("mesh hello"))?;
        prepare(&stream).map_err(deadline.io("configuring link"))?;
        peers[i + 1] = Some(stream);
    }
    Ok(peers)
}

fn join(
    addrs: &[SocketAddr],
    rank: Rank,
    world_size: u32,
    deadline: &Deadline,
) -> Result<Vec<Option<TcpStream>>, TransportError> {
    let mut rendezvous = connect_by(addrs, deadline)?;
    let local_ip = rendezvous
        .local_addr()
        .map_err(deadline.io("local address"))?
        .ip();
    let listener = TcpListener::bind((local_ip, 0))
        .map_err(|e| TransportError::Rendezvous(format!("binding mesh listener: {e}")))?;
    let port = listener
        .local_addr()
        .map_err(deadline.io("listener address"))?
        .port();

    let mut hello = Vec::with_capacity(16);
    hello.extend_from_slice(JOIN_MAGIC);
    hello.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    hello.extend_from_slice(&rank.to_le_bytes());
    hello.extend_from_slice(&world_size.to_le_bytes());
    hello.extend_from_slice(&port.to_le_bytes());
    rendezvous
        .write_all(&hello)
        .map_err(deadline.io("sending join request"))?;

    let mut status = [0u8; 1];
    read_exact_by(
        &mut rendezvous,
        &mut status,
        deadline,
        "reading rendezvous reply",
    )?;
    if status[0] != STATUS_OK {
        let mut detail = [0u8; 4];
        read_exact_by(
            &mut rendezvous,
            &mut detail,
            deadline,
            "reading rendezvous reply",
        )?;
        let detail = u32::from_le_bytes(detail);
        return Err(match status[0] {
            STATUS_DUPLICATE => TransportError::DuplicateRank(detail),
            STATUS_WORLD_SIZE => TransportError::WorldSizeMismatch {
                expected: world_size,
                got: detail,
            },
            STATUS_BAD_RANK => TransportError::InvalidRank {
                rank: detail,
                world_size,
            },
            s => TransportError::Rendezvous(format!("unknown rendezvous status {s}")),
        });
    }
    let mut table = Vec::with_capacity(world_size as usize);
    for _ in 0..world_size {
        table.push(read_addr(&mut rendezvous, deadline)?);
    }
    drop(rendezvous);

    let mut peers: Vec<Option<TcpStream>> = (0..world_size).map(|_| None).collect();
    for higher in rank + 1..world_size {
        let addr = table[higher as usize]
            .ok_or_else(|| TransportError::Rendezvous(format!("no address for rank {higher}")))?;
        let mut stream = connect_by(&[addr], deadline)?;
        stream
            .write_all(&mesh_hello(rank, world_size))
            .map_err(deadline.io("mesh hello"))?;
        peers[higher as usize] = Some(stream);
    }

    listener
        .set_nonblocking(true)
        .map_err(deadline.io("listener"))?;
    let mut accepted = 0;
    while accepted < rank {
        let mut stream = accept_by(&listener, deadline)?;
        let mut hello = [0u8; 12];
        read_exact_by(&mut stream, &mut hello, deadline, "reading mesh hello")?;
        if &hello[0..4] != MESH_MAGIC {
            continue;
        }
        let lower = u32::from_le_bytes(hello[4..8].try_into().unwrap());
        let size = u32::from_le_bytes(hello[8..12].try_into().unwrap());
        if size != world_size {
            return Err(TransportError::WorldSizeMismatch {
                expected: world_size,
                got: size,
            });
        }
        if lower >= rank {
            return Err(TransportError::InvalidRank {
                rank: lower,
                world_size,
            });
        }
        if peers[lower as usize].is_some() {
            return Err(TransportError::DuplicateRank(lower));
        }
        peers[lower as usize] = Some(stream);
        accepted += 1;
    }
    for stream in peers.iter().flatten() {
        prepare(stream).map_err(deadline.io("configuring link"))?;
    }
    Ok(peers)
}

fn mesh_hello(rank: Rank, world_size: u32) -> [u8; 12] {
    let mut h = [0u8; 12];
    h[0..4].copy_from_slice(MESH_MAGIC);
    h[4..8].copy_from_slice(&rank.to_le_bytes());
    h[8..12].copy_from_slice(&world_size.to_le_bytes());
    h
}

fn reply_error(stream: &mut TcpStream, status: u8, detail: u32) -> io::Result<()> {
    let mut msg = [0u8; 5];
    msg[0] = status;
    msg[1..5].copy_from_slice(&detail.to_le_bytes());
    stream.write_all(&msg)
}

fn encode_addr(out: &mut Vec<u8>, addr: SocketAddr) {
    match addr.ip() {
        IpAddr::V4(ip) => {
            out.push(4);
            out.extend_from_slice(&ip.octets());
        }
        IpAddr::V6(ip) => {
            out.push(6);
            out.extend_from_slice(&ip.octets());
        }
    }
    out.extend_from_slice(&addr.port().to_le_bytes());
}

fn read_addr(
    stream: &mut TcpStream,
    deadline: &Deadline,
) -> Result<Option<SocketAddr>, TransportError> {
    let what = "reading peer table";
    let mut family = [0u8; 1];
    read_exact_by(stream, &mut family, deadline, what)?;
    let ip = match family[0] {
        0 => return Ok(None),
        4 => {
            let mut b = [0u8; 4];
            read_exact_by(stream, &mut b, deadline, what)?;
            IpAddr::V4(Ipv4Addr::from(b))
        }
        6 => {
            let mut b = [0u8; 16];
            read_exact_by(stream, &mut b, deadline, what)?;
            IpAddr::V6(Ipv6Addr::from(b))
        }
        f => {
            return Err(TransportError::Rendezvous(format!(
                "bad address family {f}"
            )))
        }
    };
    let mut port = [0u8; 2];
    read_exact_by(stream, &mut port, deadline, what)?;
    Ok(Some(SocketAddr::new(ip, u16::from_le_bytes(port))))
}

//! Communicators bound to a single element type.
//!
//! Creation is collective. Every rank other than 0 sends rank 0 its flattened
//! element signature; rank 0 checks each against its own and answers every
//! rank with a verdict carrying either a fresh context id or the lowest
//! offending rank. All of this travels on context 0 with the per-world
//! creation sequence number as tag, so creating a communicator in an n-rank
//! world costs exactly `2(n - 1)` handshake frames and nothing afterwards.
//!
//! Verdict payload: status `u8` (0 ok, 1 mismatch), then either the context
//! id (`u32` LE) or the offending rank (`u32` LE), that rank's canonical
//! signature and rank 0's canonical signature.

use std::cell::Cell;
use std::fmt;
use std::marker::PhantomData;

use thiserror::Error;

use crate::buffer::{Buffer, BufferMut, BufferView, BufferViewMut, Equivalence, PayloadError};
use crate::transport::{Endpoint, Rank, Tag, TransportError};
use crate::types::{
    element_multiplicity, FlatSignature, MultiplicityError, TypeDescriptor, TypeHash,
};
use crate::wire::{Frame, FrameKind, BOOTSTRAP_CONTEXT};

const VERDICT_OK: u8 = 0;
const VERDICT_MISMATCH: u8 = 1;

/// Communicator creation failed because some rank's element type is not
/// congruent with rank 0's. Every rank of the world receives the same error.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error(
    "rank {offending_rank} signature {offending_signature} incongruent with {reference_signature}"
)]
pub struct CreationError {
    /// Lowest rank whose signature disagrees with rank 0.
    pub offending_rank: Rank,
    /// Rank 0's element signature.
    pub reference_signature: FlatSignature,
    pub offending_signature: FlatSignature,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommError {
    #[error("creation failed: {0}")]
    Creation(#[from] CreationError),
    #[error("buffer shape does not match the element type: {0}")]
    ShapeMismatch(#[from] MultiplicityError),
    #[error("message of {sent} elements truncated: receive buffer holds {capacity}")]
    Truncation { sent: u64, capacity: usize },
    #[error("type hash mismatch: communicator expects {expected}, frame carries {got}")]
    TypeConfusion { expected: TypeHash, got: TypeHash },
    #[error("communicator unusable after type confusion ({expected} vs {got})")]
    Poisoned { expected: TypeHash, got: TypeHash },
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed handshake: {0}")]
    Handshake(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiveStatus {
    pub source: Rank,
    pub tag: Tag,
    /// Elements actually received; never more than the buffer's capacity.
    pub count: usize,
}

/// A communicator whose element type is described at run time.
///
/// Buffers are checked against the element signature before anything is
/// sent. [`TypedCommunicator`] wraps this with a compile-time element type.
pub struct Communicator<'w> {
    endpoint: &'w Endpoint,
    descriptor: TypeDescriptor,
    signature: FlatSignature,
    hash: TypeHash,
    element_size: usize,
    context: u32,
    poisoned: Cell<Option<(TypeHash, TypeHash)>>,
}

impl fmt::Debug for Communicator<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Communicator")
            .field("rank", &self.rank())
            .field("context", &self.context)
            .field("signature", &self.signature)
            .field("hash", &self.hash)
            .finish()
    }
}

impl<'w> Communicator<'w> {
    /// Collectively creates a communicator for `descriptor`. Every rank of
    /// the world must call this, in the same order relative to other
    /// creations.
    pub fn create(endpoint: &'w Endpoint, descriptor: TypeDescriptor) -> Result<Self, CommError> {
        let seq = endpoint.next_creation_seq();
        let signature = descriptor.flatten();
        let hash = signature.hash();
        let context = if endpoint.world_size() == 1 {
            endpoint.allocate_context()
        } else if endpoint.rank() == 0 {
            coordinate(endpoint, seq, &signature, hash)?
        } else {
            join(endpoint, seq, &signature, hash)?
        };
        Ok(Communicator {
            endpoint,
            element_size: signature.byte_size(),
            descriptor,
            signature,
            hash,
            context,
            poisoned: Cell::new(None),
        })
    }

    pub fn rank(&self) -> Rank {
        self.endpoint.rank()
    }

    pub fn world_size(&self) -> u32 {
        self.endpoint.world_size()
    }

    pub fn context(&self) -> u32 {
        self.context
    }

    pub fn element_descriptor(&self) -> &TypeDescriptor {
        &self.descriptor
    }

    pub fn element_signature(&self) -> &FlatSignature {
        &self.signature
    }

    pub fn element_hash(&self) -> TypeHash {
        self.hash
    }

    pub fn endpoint(&self) -> &'w Endpoint {
        self.endpoint
    }

    fn check_usable(&self) -> Result<(), CommError> {
        match self.poisoned.get() {
            Some((expected, got)) => Err(CommError::Poisoned { expected, got }),
            None => Ok(()),
        }
    }

    fn check_dest(&self, dest: Rank) -> Result<(), CommError> {
        if dest >= self.world_size() {
            return Err(TransportError::InvalidDestination {
                dest,
                world_size: self.world_size(),
            }
            .into());
        }
        Ok(())
    }

    fn send_payload(
        &self,
        payload: Vec<u8>,
        count: usize,
        dest: Rank,
        tag: Tag,
    ) -> Result<(), CommError> {
        debug_assert_eq!(payload.len(), count * self.element_size);
        let frame = Frame {
            kind: FrameKind::Data,
            source: self.rank(),
            context: self.context,
            tag,
            type_hash: self.hash,
            element_count: count as u64,
            payload,
        };
        self.endpoint.send_frame(dest, frame)?;
        Ok(())
    }

    /// Takes the next matching data frame and checks it against `capacity`.
    fn receive_frame(&self, source: Rank, tag: Tag, capacity: usize) -> Result<Frame, CommError> {
        let frame = self
            .endpoint
            .recv_match(FrameKind::Data, source, self.context, tag)?;
        if frame.type_hash != self.hash {
            self.poisoned.set(Some((self.hash, frame.type_hash)));
            return Err(CommError::TypeConfusion {
                expected: self.hash,
                got: frame.type_hash,
            });
        }
        if frame.element_count > capacity as u64 {
            return Err(CommError::Truncation {
                sent: frame.element_count,
                capacity,
            });
        }
        let expected = frame.element_count as usize * self.element_size;
        if frame.payload.len() != expected {
            return Err(PayloadError::PayloadSizeMismatch {
                expected,
                actual: frame.payload.len(),
            }
            .into());
        }
        Ok(frame)
    }

    /// Sends a dynamically described buffer, which must be a whole number of
    /// elements.
    pub fn send_view(&self, view: &BufferView<'_>, dest: Rank, tag: Tag) -> Result<(), CommError> {
        self.check_usable()?;
        let count = element_multiplicity(view.signature(), &self.signature)?;
        self.check_dest(dest)?;
        self.send_payload(view.bytes().to_vec(), count, dest, tag)
    }

    pub fn receive_view(
        &self,
        view: &mut BufferViewMut<'_>,
        source: Rank,
        tag: Tag,
    ) -> Result<ReceiveStatus, CommError> {
        self.check_usable()?;
        let capacity = element_multiplicity(view.signature(), &self.signature)?;
        let frame = self.receive_frame(source, tag, capacity)?;
        let count = frame.element_count as usize;
        view.write_prefix(&self.signature.repeat(count), &frame.payload)?;
        Ok(ReceiveStatus {
            source: frame.source,
            tag: frame.tag,
            count,
        })
    }
}

fn coordinate(
    endpoint: &Endpoint,
    seq: u32,
    own: &FlatSignature,
    hash: TypeHash,
) -> Result<u32, CommError> {
    // Drain every descriptor before answering so a failed creation leaves
    // no handshake traffic behind.
    let mut offender: Option<(Rank, FlatSignature)> = None;
    for rank in 1..endpoint.world_size() {
        let frame =
            endpoint.recv_match(FrameKind::HandshakeDescriptor, rank, BOOTSTRAP_CONTEXT, seq)?;
        let theirs = FlatSignature::read_canonical(&frame.payload)
            .map(|(sig, _)| sig)
            .unwrap_or_default();
        if offender.is_none() && !theirs.congruent(own) {
            offender = Some((rank, theirs));
        }
    }

    let mut payload = Vec::new();
    let outcome = match &offender {
        None => {
            let context = endpoint.allocate_context();
            payload.push(VERDICT_OK);
            payload.extend_from_slice(&context.to_le_bytes());
            Ok(context)
        }
        Some((rank, theirs)) => {
            payload.push(VERDICT_MISMATCH);
            payload.extend_from_slice(&rank.to_le_bytes());
            theirs.write_canonical(&mut payload);
            own.write_canonical(&mut payload);
            Err(CreationError {
                offending_rank: *rank,
                reference_signature: own.clone(),
                offending_signature: theirs.clone(),
            })
        }
    };
    for rank in 1..endpoint.world_size() {
        endpoint.send_frame(
            rank,
            Frame {
                kind: FrameKind::HandshakeVerdict,
                source: 0,
                context: BOOTSTRAP_CONTEXT,
                tag: seq,
                type_hash: hash,
                element_count: 0,
                payload: payload.clone(),
            },
        )?;
    }
    outcome.map_err(CommError::from)
}

fn join(
    endpoint: &Endpoint,
    seq: u32,
    own: &FlatSignature,
    hash: TypeHash,
) -> Result<u32, CommError> {
    endpoint.send_frame(
        0,
        Frame {
            kind: FrameKind::HandshakeDescriptor,
            source: endpoint.rank(),
            context: BOOTSTRAP_CONTEXT,
            tag: seq,
            type_hash: hash,
            element_count: own.len() as u64,
            payload: own.canonical_bytes(),
        },
    )?;
    let verdict = endpoint.recv_match(FrameKind::HandshakeVerdict, 0, BOOTSTRAP_CONTEXT, seq)?;
    parse_verdict(&verdict.payload, own)
}

fn parse_verdict(payload: &[u8], own: &FlatSignature) -> Result<u32, CommError> {
    let malformed = |what: &str| CommError::Handshake(format!("verdict {what}"));
    let (&status, rest) = payload.split_first().ok_or_else(|| malformed("is empty"))?;
    let word = rest
        .get(..4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| malformed("is truncated"))?;
    match status {
        VERDICT_OK => Ok(word),
        VERDICT_MISMATCH => {
            let (offending_signature, used) =
                FlatSignature::read_canonical(&rest[4..]).map_err(|e| malformed(&e.to_string()))?;
            let reference_signature = match FlatSignature::read_canonical(&rest[4 + used..]) {
                Ok((sig, _)) => sig,
                // Peers that omit rank 0's signature: if we were not the
                // offender we are congruent with rank 0.
                Err(_) if !own.congruent(&offending_signature) => own.clone(),
                Err(e) => return Err(malformed(&e.to_string())),
            };
            Err(CreationError {
                offending_rank: word,
                reference_signature,
                offending_signature,
            }
            .into())
        }
        s => Err(malformed(&format!("has unknown status {s}"))),
    }
}

/// A communicator specialized to element type `T`.
///
/// `send` and `receive` accept any [`Buffer`] whose element type is `T`:
/// a single `T`, arrays and nested arrays of `T`, slices and vectors.
/// Passing a buffer of any other element type does not compile.
pub struct TypedCommunicator<'w, T> {
    inner: Communicator<'w>,
    _element: PhantomData<fn() -> T>,
}

impl<T> fmt::Debug for TypedCommunicator<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TypedCommunicator")
            .field(&self.inner)
            .finish()
    }
}

impl<'w, T: Equivalence> TypedCommunicator<'w, T> {
    /// Collectively creates a communicator for `T`; see [`Communicator::create`].
    pub fn new(endpoint: &'w Endpoint) -> Result<Self, CommError> {
        Ok(TypedCommunicator {
            inner: Communicator::create(endpoint, T::descriptor())?,
            _element: PhantomData,
        })
    }

    pub fn untyped(&self) -> &Communicator<'w> {
        &self.inner
    }

    pub fn rank(&self) -> Rank {
        self.inner.rank()
    }

    pub fn world_size(&self) -> u32 {
        self.inner.world_size()
    }

    pub fn context(&self) -> u32 {
        self.inner.context()
    }

    pub fn element_signature(&self) -> &FlatSignature {
        self.inner.element_signature()
    }

    pub fn element_hash(&self) -> TypeHash {
        self.inner.element_hash()
    }

    /// Sends the whole buffer as one message. Returns once the message is
    /// handed to the transport.
    pub fn send<B>(&self, buffer: &B, dest: Rank, tag: Tag) -> Result<(), CommError>
    where
        B: Buffer<Element = T> + ?Sized,
    {
        self.inner.check_usable()?;
        self.inner.check_dest(dest)?;
        let count = buffer.element_count();
        let mut payload = Vec::with_capacity(count * T::WIRE_SIZE);
        buffer.pack_into(&mut payload);
        self.inner.send_payload(payload, count, dest, tag)
    }

    /// Receives the earliest message from `source` with `tag` into the front
    /// of `buffer`. A message longer than the buffer is consumed and reported
    /// as [`CommError::Truncation`].
    pub fn receive<B>(
        &self,
        buffer: &mut B,
        source: Rank,
        tag: Tag,
    ) -> Result<ReceiveStatus, CommError>
    where
        B: BufferMut<Element = T> + ?Sized,
    {
        self.inner.check_usable()?;
        let frame = self
            .inner
            .receive_frame(source, tag, buffer.element_count())?;
        let count = frame.element_count as usize;
        buffer.unpack_from(&frame.payload, count)?;
        Ok(ReceiveStatus {
            source: frame.source,
            tag: frame.tag,
            count,
        })
    }
}

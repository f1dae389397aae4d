//! Typed point-to-point message passing.
//!
//! A [`TypedCommunicator<T>`] is bound to one element type. Any buffer whose
//! elements are `T` can be sent or received through it, whatever its shape,
//! and buffers of another element type are rejected by the compiler. When
//! ranks build their communicators independently, the collective creation
//! handshake checks that every rank's element type flattens to the same
//! [`FlatSignature`] and fails on all ranks otherwise.
//!
//! ```
//! use tmpc::{spawn_inproc_world, TypedCommunicator};
//!
//! let world = spawn_inproc_world(2).unwrap();
//! let ranks: Vec<_> = world
//!     .into_iter()
//!     .map(|ep| {
//!         std::thread::spawn(move || {
//!             let comm = TypedCommunicator::<f32>::new(&ep).unwrap();
//!             if ep.rank() == 0 {
//!                 let x = [[1.0_f32, 2.0], [3.0, 4.0], [5.0, 6.0]];
//!                 comm.send(&x, 1, 0).unwrap();
//!             } else {
//!                 let mut y = [[0.0_f32; 3]; 2];
//!                 let status = comm.receive(&mut y, 0, 0).unwrap();
//!                 assert_eq!(status.count, 6);
//!                 assert_eq!(y, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
//!             }
//!         })
//!     })
//!     .collect();
//! for rank in ranks {
//!     rank.join().unwrap();
//! }
//! ```

pub mod buffer;
pub mod comm;
pub mod transport;
pub mod types;
pub mod wire;

pub use buffer::{Buffer, BufferMut, BufferView, BufferViewMut, Equivalence, PayloadError};
pub use comm::{CommError, Communicator, CreationError, ReceiveStatus, TypedCommunicator};
pub use transport::{
    connect_tcp_world, run_inproc_world, spawn_inproc_world, Endpoint, FrameStats, Rank, Tag,
    TcpOptions, TransportError, DEFAULT_CONNECT_TIMEOUT,
};
pub use types::{
    byte_size, canonical_bytes, congruent, element_multiplicity, flatten, signature_hash,
    FlatSignature, FundamentalKind, MultiplicityError, TypeDescriptor, TypeHash,
};
pub use wire::{decode_frame, encode_frame, Frame, FrameKind, WireError, HEADER_LEN};

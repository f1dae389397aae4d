//! Frame encoding, format version 1.
//!
//! All integers are little-endian:
//!
//! ```text
//! offset size field
//!      0    4 magic "TMPC"
//!      4    2 version (1)
//!      6    1 kind
//!      7    4 source
//!     11    4 context
//!     15    4 tag
//!     19    8 type_hash
//!     27    8 element_count
//!     35    8 payload_length
//!     43    . payload
//! ```

use std::io::{self, Read};

use thiserror::Error;

use crate::types::TypeHash;

pub const MAGIC: [u8; 4] = *b"TMPC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 43;

/// Context reserved for communicator-creation traffic.
pub const BOOTSTRAP_CONTEXT: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Data = 0,
    HandshakeDescriptor = 1,
    HandshakeVerdict = 2,
}

impl FrameKind {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Data),
            1 => Some(Self::HandshakeDescriptor),
            2 => Some(Self::HandshakeVerdict),
            _ => None,
        }
    }

    pub fn is_handshake(self) -> bool {
        !matches!(self, Self::Data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub source: u32,
    pub context: u32,
    pub tag: u32,
    pub type_hash: TypeHash,
    pub element_count: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderField {
    Magic,
    Version,
    Kind,
    Source,
    Context,
    Tag,
    TypeHash,
    ElementCount,
    PayloadLength,
    Payload,
}

impl std::fmt::Display for HeaderField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Magic => "magic",
            Self::Version => "version",
            Self::Kind => "kind",
            Self::Source => "source",
            Self::Context => "context",
            Self::Tag => "tag",
            Self::TypeHash => "type_hash",
            Self::ElementCount => "element_count",
            Self::PayloadLength => "payload_length",
            Self::Payload => "payload",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("frame truncated in {field}: need {needed} bytes, have {available}")]
    TruncatedFrame {
        field: HeaderField,
        needed: usize,
        available: usize,
    },
    #[error("{len} trailing bytes after frame")]
    TrailingBytes { len: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

// (field, start, end) in header order.
const LAYOUT: [(HeaderField, usize, usize); 9] = [
    (HeaderField::Magic, 0, 4),
    (HeaderField::Version, 4, 6),
    (HeaderField::Kind, 6, 7),
    (HeaderField::Source, 7, 11),
    (HeaderField::Context, 11, 15),
    (HeaderField::Tag, 15, 19),
    (HeaderField::TypeHash, 19, 27),
    (HeaderField::ElementCount, 27, 35),
    (HeaderField::PayloadLength, 35, 43),
];

/// Fields of a decoded header; `payload_length` bytes of payload follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: FrameKind,
    pub source: u32,
    pub context: u32,
    pub tag: u32,
    pub type_hash: TypeHash,
    pub element_count: u64,
    pub payload_length: u64,
}

impl Frame {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn header(&self) -> Header {
        Header {
            kind: self.kind,
            source: self.source,
            context: self.context,
            tag: self.tag,
            type_hash: self.type_hash,
            element_count: self.element_count,
            payload_length: self.payload.len() as u64,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.header().encode());
        out.extend_from_slice(&self.payload);
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame, WireError> {
        let (frame, used) = Frame::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(WireError::TrailingBytes {
                len: bytes.len() - used,
            });
        }
        Ok(frame)
    }

    /// Decodes one frame from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
        let header = Header::decode(bytes)?;
        let available = bytes.len() - HEADER_LEN;
        let payload = usize::try_from(header.payload_length)
            .ok()
            .and_then(|len| bytes[HEADER_LEN..].get(..len))
            .ok_or(WireError::TruncatedFrame {
                field: HeaderField::Payload,
                needed: usize::try_from(header.payload_length).unwrap_or(usize::MAX),
                available,
            })?;
        let used = HEADER_LEN + payload.len();
        Ok((header.with_payload(payload.to_vec()), used))
    }

    /// Reads one frame from a byte stream. Returns `Ok(None)` on a clean
    /// end of stream before the first header byte.
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Option<Frame>, WireError> {
        let mut head = [0u8; HEADER_LEN];
        let mut filled = 0;
        while filled < HEADER_LEN {
            match reader.read(&mut head[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => {
                    return Err(Header::decode(&head[..filled]).err().unwrap_or(
                        WireError::TruncatedFrame {
                            field: HeaderField::PayloadLength,
                            needed: HEADER_LEN,
                            available: filled,
                        },
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let header = Header::decode(&head)?;
        let len =
            usize::try_from(header.payload_length).map_err(|_| WireError::TruncatedFrame {
                field: HeaderField::Payload,
                needed: usize::MAX,
                available: 0,
            })?;
        let mut payload = Vec::new();
        let got = reader.take(len as u64).read_to_end(&mut payload)?;
        if got != len {
            return Err(WireError::TruncatedFrame {
                field: HeaderField::Payload,
                needed: len,
                available: got,
            });
        }
        Ok(Some(header.with_payload(payload)))
    }
}

impl Header {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6] = self.kind as u8;
        h[7..11].copy_from_slice(&self.source.to_le_bytes());
        h[11..15].copy_from_slice(&self.context.to_le_bytes());
        h[15..19].copy_from_slice(&self.tag.to_le_bytes());
        h[19..27].copy_from_slice(&self.type_hash.0.to_le_bytes());
        h[27..35].copy_from_slice(&self.element_count.to_le_bytes());
        h[35..43].copy_from_slice(&self.payload_length.to_le_bytes());
        h
    }

    /// Decodes the header at the front of `bytes`. Fields are validated in
    /// order, so a short buffer reports the first field it cannot hold.
    pub fn decode(bytes: &[u8]) -> Result<Header, WireError> {
        let field = |name: HeaderField| -> Result<&[u8], WireError> {
            let &(_, start, end) = LAYOUT.iter().find(|(f, _, _)| *f == name).unwrap();
            bytes.get(start..end).ok_or(WireError::TruncatedFrame {
                field: name,
                needed: end,
                available: bytes.len(),
            })
        };
        let magic: [u8; 4] = field(HeaderField::Magic)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        let version = u16::from_le_bytes(field(HeaderField::Version)?.try_into().unwrap());
        if version != VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        let code = field(HeaderField::Kind)?[0];
        let kind = FrameKind::from_code(code).ok_or(WireError::UnknownKind(code))?;
        let u32_at = |f| field(f).map(|b| u32::from_le_bytes(b.try_into().unwrap()));
        let u64_at = |f| field(f).map(|b| u64::from_le_bytes(b.try_into().unwrap()));
        Ok(Header {
            kind,
            source: u32_at(HeaderField::Source)?,
            context: u32_at(HeaderField::Context)?,
            tag: u32_at(HeaderField::Tag)?,
            type_hash: TypeHash(u64_at(HeaderField::TypeHash)?),
            element_count: u64_at(HeaderField::ElementCount)?,
            payload_length: u64_at(HeaderField::PayloadLength)?,
        })
    }

    fn with_payload(self, payload: Vec<u8>) -> Frame {
        Frame {
            kind: self.kind,
            source: self.source,
            context: self.context,
            tag: self.tag,
            type_hash: self.type_hash,
            element_count: self.element_count,
            payload,
        }
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    frame.encode()
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    Frame::decode(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Frame {
        Frame {
            kind: FrameKind::HandshakeVerdict,
            source: 7,
            context: 0,
            tag: 3,
            type_hash: TypeHash(0x0102_0304_0506_0708),
            element_count: 0,
            payload: vec![0, 1, 0, 0, 0],
        }
    }

    #[test]
    fn header_is_43_bytes() {
        let f = sample();
        let bytes = f.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 5);
        assert_eq!(&bytes[..4], b"TMPC");
        assert_eq!(&bytes[35..43], &5u64.to_le_bytes());
    }

    #[test]
    fn layout_is_contiguous() {
        let mut offset = 0;
        for (_, start, end) in LAYOUT {
            assert_eq!(start, offset);
            offset = end;
        }
        assert_eq!(offset, HEADER_LEN);
    }

    #[test]
    fn unknown_kind() {
        let mut bytes = sample().encode();
        bytes[6] = 9;
        assert!(matches!(
            decode_frame(&bytes),
            Err(WireError::UnknownKind(9))
        ));
    }

    #[test]
    fn trailing_bytes_rejected_but_prefix_decodes() {
        let mut bytes = sample().encode();
        bytes.push(0xAA);
        assert!(matches!(
            decode_frame(&bytes),
            Err(WireError::TrailingBytes { len: 1 })
        ));
        let (f, used) = Frame::decode_prefix(&bytes).unwrap();
        assert_eq!(f, sample());
        assert_eq!(used, bytes.len() - 1);
    }

    #[test]
    fn short_header_names_field() {
        let bytes = sample().encode();
        match decode_frame(&bytes[..20]) {
            Err(WireError::TruncatedFrame { field, .. }) => {
                assert_eq!(field, HeaderField::TypeHash)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stream_reading() {
        let a = sample();
        let mut b = sample();
        b.payload = vec![9; 300];
        let mut stream = a.encode();
        stream.extend(b.encode());
        let mut cursor = io::Cursor::new(stream);
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), Some(a));
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), Some(b));
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), None);

        let bytes = sample().encode();
        let mut cut = io::Cursor::new(bytes[..bytes.len() - 2].to_vec());
        assert!(matches!(
            Frame::read_from(&mut cut),
            Err(WireError::TruncatedFrame {
                field: HeaderField::Payload,
                needed: 5,
                available: 3
            })
        ));
        let mut cut = io::Cursor::new(bytes[..10].to_vec());
        assert!(matches!(
            Frame::read_from(&mut cut),
            Err(WireError::TruncatedFrame { .. })
        ));
    }
}

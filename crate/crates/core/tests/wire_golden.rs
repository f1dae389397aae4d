use proptest::prelude::*;
use tmpc::wire::{HeaderField, BOOTSTRAP_CONTEXT};
use tmpc::{decode_frame, encode_frame, Frame, FrameKind, TypeHash, WireError, HEADER_LEN};

/// DATA frame: source 0, context 1, tag 0, hash of [F32], one element, 42.5f32.
#[rustfmt::skip]
const DATA_F32_SCALAR: [u8; 47] = [
    0x54, 0x4D, 0x50, 0x43,                         // "TMPC"
    0x01, 0x00,                                     // version 1
    0x00,                                           // DATA
    0x00, 0x00, 0x00, 0x00,                         // source 0
    0x01, 0x00, 0x00, 0x00,                         // context 1
    0x00, 0x00, 0x00, 0x00,                         // tag 0
    0x37, 0x8E, 0xDC, 0xA7, 0xAE, 0x75, 0x0D, 0xD8, // hash 0xd80d75aea7dc8e37
    0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // element_count 1
    0x04, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // payload_length 4
    0x00, 0x00, 0x2A, 0x42,                         // 42.5f32
];

/// Mismatch verdict from rank 0 on the bootstrap context, creation 3:
/// offending rank 1 with [I32], reference [F32].
#[rustfmt::skip]
const VERDICT_MISMATCH: [u8; 58] = [
    0x54, 0x4D, 0x50, 0x43,
    0x01, 0x00,
    0x02,                                           // HANDSHAKE_VERDICT
    0x00, 0x00, 0x00, 0x00,
    0x00, 0x00, 0x00, 0x00,                         // context 0
    0x03, 0x00, 0x00, 0x00,                         // tag 3
    0x37, 0x8E, 0xDC, 0xA7, 0xAE, 0x75, 0x0D, 0xD8,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
    0x0F, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // payload_length 15
    0x01,                                           // mismatch
    0x01, 0x00, 0x00, 0x00,                         // offending rank 1
    0x01, 0x00, 0x00, 0x00, 0x03,                   // [I32]
    0x01, 0x00, 0x00, 0x00, 0x09,                   // [F32]
];

fn data_frame() -> Frame {
    Frame {
        kind: FrameKind::Data,
        source: 0,
        context: 1,
        tag: 0,
        type_hash: TypeHash(0xd80d75aea7dc8e37),
        element_count: 1,
        payload: 42.5f32.to_le_bytes().to_vec(),
    }
}

#[test]
fn golden_data_frame() {
    let f = decode_frame(&DATA_F32_SCALAR).unwrap();
    assert_eq!(f, data_frame());
    assert_eq!(encode_frame(&f), DATA_F32_SCALAR);
    assert_eq!(HEADER_LEN, 43);
}

#[test]
fn golden_verdict_frame() {
    let f = decode_frame(&VERDICT_MISMATCH).unwrap();
    assert_eq!(f.kind, FrameKind::HandshakeVerdict);
    assert_eq!(f.context, BOOTSTRAP_CONTEXT);
    assert_eq!(f.tag, 3);
    assert_eq!(f.payload.len(), 15);
    assert_eq!(encode_frame(&f), VERDICT_MISMATCH);
}

#[test]
fn altered_magic() {
    let mut bytes = DATA_F32_SCALAR;
    bytes[0] = b'X';
    assert!(matches!(decode_frame(&bytes), Err(WireError::BadMagic(m)) if m == *b"XMPC"));
}

#[test]
fn altered_version() {
    let mut bytes = DATA_F32_SCALAR;
    bytes[4] = 2;
    assert!(matches!(
        decode_frame(&bytes),
        Err(WireError::UnsupportedVersion(2))
    ));
}

#[test]
fn declared_payload_longer_than_data() {
    let mut bytes = DATA_F32_SCALAR;
    bytes[35] = 8;
    match decode_frame(&bytes) {
        Err(WireError::TruncatedFrame {
            field,
            needed,
            available,
        }) => {
            assert_eq!(field, HeaderField::Payload);
            assert_eq!((needed, available), (8, 4));
        }
        other => panic!("expected TruncatedFrame, got {other:?}"),
    }
}

#[test]
fn header_shorter_than_43_bytes() {
    for cut in [0, 3, 5, 6, 10, 42] {
        assert!(
            matches!(
                decode_frame(&DATA_F32_SCALAR[..cut]),
                Err(WireError::TruncatedFrame { .. })
            ),
            "cut at {cut}"
        );
    }
}

fn frame_strategy() -> impl Strategy<Value = Frame> {
    (
        prop::sample::select(vec![
            FrameKind::Data,
            FrameKind::HandshakeDescriptor,
            FrameKind::HandshakeVerdict,
        ]),
        any::<u32>(),
        any::<u32>(),
        any::<u32>(),
        any::<u64>(),
        any::<u64>(),
        prop::collection::vec(any::<u8>(), 0..256),
    )
        .prop_map(|(kind, source, context, tag, hash, count, payload)| Frame {
            kind,
            source,
            context,
            tag,
            type_hash: TypeHash(hash),
            element_count: count,
            payload,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn encode_decode_identity(f in frame_strategy()) {
        let bytes = encode_frame(&f);
        prop_assert_eq!(bytes.len(), HEADER_LEN + f.payload.len());
        prop_assert_eq!(&bytes[35..43], &(f.payload.len() as u64).to_le_bytes()[..]);
        prop_assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode_frame(&bytes);
    }
}

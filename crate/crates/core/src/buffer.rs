//! Element types and the buffers that carry them.
//!
//! [`Equivalence`] ties a Rust type to its [`TypeDescriptor`] and to its
//! canonical byte form: components in flatten order, each little-endian,
//! packed without padding. [`Buffer`] and [`BufferMut`] describe caller data
//! holding some number of elements of one type: a single value, an array,
//! nested arrays, a slice or a `Vec`. A `[[f32; 2]; 3]` is therefore a buffer
//! of six `f32` elements, and so is a `[[f32; 3]; 2]`.
//!
//! [`BufferView`] and [`BufferViewMut`] are the dynamically described
//! counterparts, used when the element type is only known at run time.

use thiserror::Error;

use crate::types::{FlatSignature, FundamentalKind, TypeDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("payload is {actual} bytes, expected {expected}")]
    PayloadSizeMismatch { expected: usize, actual: usize },
    #[error("invalid bool byte {value:#04x} at payload offset {offset}")]
    InvalidBool { offset: usize, value: u8 },
}

impl PayloadError {
    fn shifted(self, by: usize) -> Self {
        match self {
            PayloadError::InvalidBool { offset, value } => PayloadError::InvalidBool {
                offset: offset + by,
                value,
            },
            e => e,
        }
    }
}

fn check_len(bytes: &[u8], expected: usize) -> Result<(), PayloadError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(PayloadError::PayloadSizeMismatch {
            expected,
            actual: bytes.len(),
        })
    }
}

/// A type with a fixed structural description and canonical encoding.
///
/// Implemented for the fundamental numeric types and `bool`, for arrays of
/// equivalent types, and for records via [`impl_equivalence!`](crate::impl_equivalence).
pub trait Equivalence: Sized {
    /// Size of one value in canonical form.
    const WIRE_SIZE: usize;

    fn descriptor() -> TypeDescriptor;

    fn signature() -> FlatSignature {
        Self::descriptor().flatten()
    }

    fn encode(&self, out: &mut Vec<u8>);

    /// Decodes one value from exactly `WIRE_SIZE` bytes.
    fn decode(bytes: &[u8]) -> Result<Self, PayloadError>;

    fn encode_slice(items: &[Self], out: &mut Vec<u8>) {
        out.reserve(items.len() * Self::WIRE_SIZE);
        for item in items {
            item.encode(out);
        }
    }

    /// Decodes `dst.len()` consecutive values.
    fn decode_slice(bytes: &[u8], dst: &mut [Self]) -> Result<(), PayloadError> {
        check_len(bytes, dst.len() * Self::WIRE_SIZE)?;
        if Self::WIRE_SIZE == 0 {
            return Ok(());
        }
        for (i, (chunk, slot)) in bytes.chunks_exact(Self::WIRE_SIZE).zip(dst).enumerate() {
            *slot = Self::decode(chunk).map_err(|e| e.shifted(i * Self::WIRE_SIZE))?;
        }
        Ok(())
    }
}

macro_rules! numeric_equivalence {
    ($($ty:ty => $kind:ident),* $(,)?) => {$(
        impl Equivalence for $ty {
            const WIRE_SIZE: usize = std::mem::size_of::<$ty>();

            fn descriptor() -> TypeDescriptor {
                TypeDescriptor::fundamental(FundamentalKind::$kind)
            }

            fn encode(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
                check_len(bytes, Self::WIRE_SIZE)?;
                Ok(<$ty>::from_le_bytes(bytes.try_into().unwrap()))
            }

            // On little-endian targets the wire form is the memory image.
            fn encode_slice(items: &[Self], out: &mut Vec<u8>) {
                #[cfg(target_endian = "little")]
                out.extend_from_slice(bytemuck::cast_slice(items));
                #[cfg(target_endian = "big")]
                for x in items {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }

            fn decode_slice(bytes: &[u8], dst: &mut [Self]) -> Result<(), PayloadError> {
                check_len(bytes, dst.len() * Self::WIRE_SIZE)?;
                #[cfg(target_endian = "little")]
                bytemuck::cast_slice_mut::<$ty, u8>(dst).copy_from_slice(bytes);
                #[cfg(target_endian = "big")]
                for (chunk, slot) in bytes.chunks_exact(Self::WIRE_SIZE).zip(dst) {
                    *slot = <$ty>::from_le_bytes(chunk.try_into().unwrap());
                }
                Ok(())
            }
        }

        scalar_buffer!($ty);
    )*};
}

impl Equivalence for bool {
    const WIRE_SIZE: usize = 1;

    fn descriptor() -> TypeDescriptor {
        TypeDescriptor::fundamental(FundamentalKind::Bool)
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.push(u8::from(*self));
    }

    fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
        check_len(bytes, 1)?;
        match bytes[0] {
            0 => Ok(false),
            1 => Ok(true),
            value => Err(PayloadError::InvalidBool { offset: 0, value }),
        }
    }
}

impl<T: Equivalence, const N: usize> Equivalence for [T; N] {
    const WIRE_SIZE: usize = N * T::WIRE_SIZE;

    fn descriptor() -> TypeDescriptor {
        const { assert!(N > 0, "zero-length arrays have no descriptor") };
        TypeDescriptor::array(T::descriptor(), N).unwrap()
    }

    fn encode(&self, out: &mut Vec<u8>) {
        T::encode_slice(self, out);
    }

    fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
        check_len(bytes, Self::WIRE_SIZE)?;
        let items = bytes
            .chunks_exact(T::WIRE_SIZE.max(1))
            .enumerate()
            .map(|(i, c)| T::decode(c).map_err(|e| e.shifted(i * T::WIRE_SIZE)))
            .collect::<Result<Vec<T>, _>>()?;
        Ok(items
            .try_into()
            .unwrap_or_else(|_| unreachable!("length checked above")))
    }
}

/// Caller data holding a whole number of elements of one type.
pub trait Buffer {
    type Element: Equivalence;

    fn element_count(&self) -> usize;

    /// Appends the canonical bytes of every element, in flatten order.
    fn pack_into(&self, out: &mut Vec<u8>);

    fn slice_count(items: &[Self]) -> usize
    where
        Self: Sized,
    {
        items.iter().map(Buffer::element_count).sum()
    }

    fn pack_slice(items: &[Self], out: &mut Vec<u8>)
    where
        Self: Sized,
    {
        for item in items {
            item.pack_into(out);
        }
    }

    /// Flattened signature of the whole buffer.
    fn buffer_signature(&self) -> FlatSignature {
        <Self::Element as Equivalence>::signature().repeat(self.element_count())
    }

    fn pack(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(self.element_count() * <Self::Element as Equivalence>::WIRE_SIZE);
        self.pack_into(&mut out);
        out
    }
}

/// A buffer that can be overwritten from canonical bytes.
pub trait BufferMut: Buffer {
    /// Overwrites the first `count` elements from `bytes`, which must hold
    /// exactly `count` encoded elements. Later elements are left untouched.
    fn unpack_from(&mut self, bytes: &[u8], count: usize) -> Result<(), PayloadError>;

    fn unpack_slice(items: &mut [Self], bytes: &[u8], count: usize) -> Result<(), PayloadError>
    where
        Self: Sized,
    {
        let size = <Self::Element as Equivalence>::WIRE_SIZE;
        check_len(bytes, count * size)?;
        let mut done = 0;
        for item in items {
            if done == count {
                break;
            }
            let take = item.element_count().min(count - done);
            let offset = done * size;
            item.unpack_from(&bytes[offset..offset + take * size], take)
                .map_err(|e| e.shifted(offset))?;
            done += take;
        }
        if done < count {
            return Err(PayloadError::PayloadSizeMismatch {
                expected: done * size,
                actual: bytes.len(),
            });
        }
        Ok(())
    }
}

/// Implements [`Buffer`] and [`BufferMut`] for an element type used as a
/// single-value buffer of itself.
#[macro_export]
macro_rules! scalar_buffer {
    ($ty:ty) => {
        impl $crate::buffer::Buffer for $ty {
            type Element = $ty;

            fn element_count(&self) -> usize {
                1
            }

            fn pack_into(&self, out: &mut ::std::vec::Vec<u8>) {
                $crate::buffer::Equivalence::encode(self, out);
            }

            fn slice_count(items: &[Self]) -> usize {
                items.len()
            }

            fn pack_slice(items: &[Self], out: &mut ::std::vec::Vec<u8>) {
                <$ty as $crate::buffer::Equivalence>::encode_slice(items, out);
            }
        }

        impl $crate::buffer::BufferMut for $ty {
            fn unpack_from(
                &mut self,
                bytes: &[u8],
                count: usize,
            ) -> ::std::result::Result<(), $crate::buffer::PayloadError> {
                match count {
                    0 => Ok(()),
                    _ => {
                        *self = <$ty as $crate::buffer::Equivalence>::decode(bytes)?;
                        Ok(())
                    }
                }
            }

            fn unpack_slice(
                items: &mut [Self],
                bytes: &[u8],
                count: usize,
            ) -> ::std::result::Result<(), $crate::buffer::PayloadError> {
                if count > items.len() {
                    return Err($crate::buffer::PayloadError::PayloadSizeMismatch {
                        expected: items.len() * <$ty as $crate::buffer::Equivalence>::WIRE_SIZE,
                        actual: bytes.len(),
                    });
                }
                <$ty as $crate::buffer::Equivalence>::decode_slice(bytes, &mut items[..count])
            }
        }
    };
}

numeric_equivalence! {
    i8 => I8,
    i16 => I16,
    i32 => I32,
    i64 => I64,
    u8 => U8,
    u16 => U16,
    u32 => U32,
    u64 => U64,
    f32 => F32,
    f64 => F64,
}

scalar_buffer!(bool);

impl<B: Buffer, const N: usize> Buffer for [B; N] {
    type Element = B::Element;

    fn element_count(&self) -> usize {
        B::slice_count(self)
    }

    fn pack_into(&self, out: &mut Vec<u8>) {
        B::pack_slice(self, out);
    }
}

impl<B: BufferMut, const N: usize> BufferMut for [B; N] {
    fn unpack_from(&mut self, bytes: &[u8], count: usize) -> Result<(), PayloadError> {
        B::unpack_slice(self, bytes, count)
    }
}

impl<B: Buffer> Buffer for [B] {
    type Element = B::Element;

    fn element_count(&self) -> usize {
        B::slice_count(self)
    }

    fn pack_into(&self, out: &mut Vec<u8>) {
        B::pack_slice(self, out);
    }
}

impl<B: BufferMut> BufferMut for [B] {
    fn unpack_from(&mut self, bytes: &[u8], count: usize) -> Result<(), PayloadError> {
        B::unpack_slice(self, bytes, count)
    }
}

impl<B: Buffer> Buffer for Vec<B> {
    type Element = B::Element;

    fn element_count(&self) -> usize {
        B::slice_count(self)
    }

    fn pack_into(&self, out: &mut Vec<u8>) {
        B::pack_slice(self, out);
    }
}

impl<B: BufferMut> BufferMut for Vec<B> {
    fn unpack_from(&mut self, bytes: &[u8], count: usize) -> Result<(), PayloadError> {
        B::unpack_slice(self, bytes, count)
    }
}

/// Makes a plain struct usable as a communicator element type.
///
/// Fields are listed in declaration order with their types; the struct's
/// signature is the concatenation of the field signatures.
///
/// ```
/// #[derive(Debug, Clone, Copy, Default, PartialEq)]
/// struct Particle {
///     position: [f64; 3],
///     charge: i32,
/// }
///
/// tmpc::impl_equivalence!(Particle { position: [f64; 3], charge: i32 });
///
/// use tmpc::{Equivalence, FundamentalKind::*};
/// assert_eq!(Particle::signature().kinds(), &[F64, F64, F64, I32]);
/// ```
#[macro_export]
macro_rules! impl_equivalence {
    ($name:ident { $($field:ident : $fty:ty),+ $(,)? }) => {
        impl $crate::buffer::Equivalence for $name {
            const WIRE_SIZE: usize = 0 $(+ <$fty as $crate::buffer::Equivalence>::WIRE_SIZE)+;

            fn descriptor() -> $crate::types::TypeDescriptor {
                $crate::types::TypeDescriptor::record([
                    $((stringify!($field), <$fty as $crate::buffer::Equivalence>::descriptor())),+
                ])
                .expect("record fields are unique and nonempty")
            }

            fn encode(&self, out: &mut ::std::vec::Vec<u8>) {
                $($crate::buffer::Equivalence::encode(&self.$field, out);)+
            }

            fn decode(bytes: &[u8]) -> ::std::result::Result<Self, $crate::buffer::PayloadError> {
                if bytes.len() != <Self as $crate::buffer::Equivalence>::WIRE_SIZE {
                    return Err($crate::buffer::PayloadError::PayloadSizeMismatch {
                        expected: <Self as $crate::buffer::Equivalence>::WIRE_SIZE,
                        actual: bytes.len(),
                    });
                }
                let mut _offset = 0usize;
                Ok($name {
                    $($field: {
                        let size = <$fty as $crate::buffer::Equivalence>::WIRE_SIZE;
                        let value = <$fty as $crate::buffer::Equivalence>::decode(&bytes[_offset.._offset + size])
                            .map_err(|e| $crate::buffer::__shift_payload_error(e, _offset))?;
                        _offset += size;
                        value
                    }),+
                })
            }
        }

        $crate::scalar_buffer!($name);
    };
}

#[doc(hidden)]
pub fn __shift_payload_error(e: PayloadError, by: usize) -> PayloadError {
    e.shifted(by)
}

/// Checks that `bytes` is a canonical encoding of `signature`.
pub fn validate_canonical(signature: &FlatSignature, bytes: &[u8]) -> Result<(), PayloadError> {
    check_len(bytes, signature.byte_size())?;
    let mut offset = 0;
    for kind in signature.kinds() {
        if *kind == FundamentalKind::Bool && bytes[offset] > 1 {
            return Err(PayloadError::InvalidBool {
                offset,
                value: bytes[offset],
            });
        }
        offset += kind.width();
    }
    Ok(())
}

/// Read-only, dynamically described payload: a flat signature plus its
/// canonical bytes.
#[derive(Debug, Clone, Copy)]
pub struct BufferView<'a> {
    signature: &'a FlatSignature,
    bytes: &'a [u8],
}

impl<'a> BufferView<'a> {
    pub fn new(signature: &'a FlatSignature, bytes: &'a [u8]) -> Result<Self, PayloadError> {
        validate_canonical(signature, bytes)?;
        Ok(BufferView { signature, bytes })
    }

    pub fn signature(&self) -> &FlatSignature {
        self.signature
    }

    pub fn bytes(&self) -> &'a [u8] {
        self.bytes
    }
}

/// Writable counterpart of [`BufferView`].
#[derive(Debug)]
pub struct BufferViewMut<'a> {
    signature: &'a FlatSignature,
    bytes: &'a mut [u8],
}

impl<'a> BufferViewMut<'a> {
    pub fn new(signature: &'a FlatSignature, bytes: &'a mut [u8]) -> Result<Self, PayloadError> {
        check_len(bytes, signature.byte_size())?;
        Ok(BufferViewMut { signature, bytes })
    }

    pub fn signature(&self) -> &FlatSignature {
        self.signature
    }

    pub fn bytes(&self) -> &[u8] {
        self.bytes
    }

    /// Copies canonical `data` over the front of the buffer after checking
    /// it against the matching prefix of the signature.
    pub(crate) fn write_prefix(
        &mut self,
        prefix: &FlatSignature,
        data: &[u8],
    ) -> Result<(), PayloadError> {
        validate_canonical(prefix, data)?;
        self.bytes[..data.len()].copy_from_slice(data);
        Ok(())
    }
}

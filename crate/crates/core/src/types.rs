//! Element type descriptions and the congruence relation.
//!
//! A [`TypeDescriptor`] describes the structure of an element type: a
//! fundamental scalar, a fixed-length array, or a record of named fields.
//! Flattening a descriptor depth-first yields a [`FlatSignature`], and two
//! types are congruent exactly when their flat signatures are identical.
//! Field names and nesting shape never matter, so a 3×2 matrix of `f32` is
//! congruent with a 2×3 one, while `f32` and `i32` are not even though both
//! are four bytes wide.

use std::fmt;

use thiserror::Error;

/// Scalar kinds admissible in a signature. The discriminants are the wire
/// codes of format version 1 and must never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FundamentalKind {
    I8 = 1,
    I16 = 2,
    I32 = 3,
    I64 = 4,
    U8 = 5,
    U16 = 6,
    U32 = 7,
    U64 = 8,
    F32 = 9,
    F64 = 10,
    Bool = 11,
}

impl FundamentalKind {
    pub const ALL: [FundamentalKind; 11] = [
        FundamentalKind::I8,
        FundamentalKind::I16,
        FundamentalKind::I32,
        FundamentalKind::I64,
        FundamentalKind::U8,
        FundamentalKind::U16,
        FundamentalKind::U32,
        FundamentalKind::U64,
        FundamentalKind::F32,
        FundamentalKind::F64,
        FundamentalKind::Bool,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1..=11 => Some(Self::ALL[usize::from(code) - 1]),
            _ => None,
        }
    }

    /// Width in bytes of one value of this kind on the wire.
    pub fn width(self) -> usize {
        match self {
            Self::I8 | Self::U8 | Self::Bool => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::I64 | Self::U64 | Self::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::I8 => "I8",
            Self::I16 => "I16",
            Self::I32 => "I32",
            Self::I64 => "I64",
            Self::U8 => "U8",
            Self::U16 => "U16",
            Self::U32 => "U32",
            Self::U64 => "U64",
            Self::F32 => "F32",
            Self::F64 => "F64",
            Self::Bool => "BOOL",
        }
    }
}

impl fmt::Display for FundamentalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("array length must be at least 1")]
    EmptyArray,
    #[error("record must have at least one field")]
    EmptyRecord,
    #[error("record field name must not be empty")]
    EmptyFieldName,
    #[error("duplicate record field `{0}`")]
    DuplicateField(String),
}

/// Structural description of an element type.
///
/// Descriptors can only be built through the validating constructors, so
/// every value satisfies: array lengths are at least 1 and records have at
/// least one uniquely named field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeDescriptor(Repr);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Repr {
    Fundamental(FundamentalKind),
    Array(Box<TypeDescriptor>, usize),
    Record(Vec<(String, TypeDescriptor)>),
}

/// Borrowed view of a descriptor's top-level shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorShape<'a> {
    Fundamental(FundamentalKind),
    Array {
        element: &'a TypeDescriptor,
        length: usize,
    },
    Record(&'a [(String, TypeDescriptor)]),
}

impl TypeDescriptor {
    pub fn fundamental(kind: FundamentalKind) -> Self {
        TypeDescriptor(Repr::Fundamental(kind))
    }

    pub fn array(element: TypeDescriptor, length: usize) -> Result<Self, DescriptorError> {
        if length == 0 {
            return Err(DescriptorError::EmptyArray);
        }
        Ok(TypeDescriptor(Repr::Array(Box::new(element), length)))
    }

    pub fn record<I, S>(fields: I) -> Result<Self, DescriptorError>
    where
        I: IntoIterator<Item = (S, TypeDescriptor)>,
        S: Into<String>,
    {
        let fields: Vec<(String, TypeDescriptor)> =
            fields.into_iter().map(|(n, d)| (n.into(), d)).collect();
        if fields.is_empty() {
            return Err(DescriptorError::EmptyRecord);
        }
        for (i, (name, _)) in fields.iter().enumerate() {
            if name.is_empty() {
                return Err(DescriptorError::EmptyFieldName);
            }
            if fields[..i].iter().any(|(other, _)| other == name) {
                return Err(DescriptorError::DuplicateField(name.clone()));
            }
        }
        Ok(TypeDescriptor(Repr::Record(fields)))
    }

    pub fn shape(&self) -> DescriptorShape<'_> {
        match &self.0 {
            Repr::Fundamental(k) => DescriptorShape::Fundamental(*k),
            Repr::Array(e, n) => DescriptorShape::Array {
                element: e,
                length: *n,
            },
            Repr::Record(fs) => DescriptorShape::Record(fs),
        }
    }

    /// Nesting depth; a fundamental has depth 1.
    pub fn depth(&self) -> usize {
        match &self.0 {
            Repr::Fundamental(_) => 1,
            Repr::Array(e, _) => 1 + e.depth(),
            Repr::Record(fs) => 1 + fs.iter().map(|(_, d)| d.depth()).max().unwrap_or(0),
        }
    }

    pub fn flatten(&self) -> FlatSignature {
        let mut kinds = Vec::new();
        self.flatten_into(&mut kinds);
        FlatSignature(kinds)
    }

    fn flatten_into(&self, out: &mut Vec<FundamentalKind>) {
        match &self.0 {
            Repr::Fundamental(k) => out.push(*k),
            Repr::Array(e, n) => {
                let start = out.len();
                e.flatten_into(out);
                let end = out.len();
                for _ in 1..*n {
                    out.extend_from_within(start..end);
                }
            }
            Repr::Record(fs) => {
                for (_, d) in fs {
                    d.flatten_into(out);
                }
            }
        }
    }
}

impl From<FundamentalKind> for TypeDescriptor {
    fn from(kind: FundamentalKind) -> Self {
        TypeDescriptor::fundamental(kind)
    }
}

/// Depth-first, left-to-right flattening of `descriptor`.
pub fn flatten(descriptor: &TypeDescriptor) -> FlatSignature {
    descriptor.flatten()
}

/// Ordered sequence of fundamental kinds; the unit of congruence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlatSignature(Vec<FundamentalKind>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("signature bytes truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown kind code {code} at component {index}")]
    UnknownKind { index: usize, code: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MultiplicityError {
    #[error("element signature is empty")]
    EmptyElement,
    #[error("buffer signature of {buffer_len} components is not a whole repetition of the {element_len}-component element signature")]
    NotAMultiple {
        buffer_len: usize,
        element_len: usize,
    },
}

impl FlatSignature {
    pub fn new(kinds: Vec<FundamentalKind>) -> Self {
        FlatSignature(kinds)
    }

    pub fn kinds(&self) -> &[FundamentalKind] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `n` concatenated copies of this signature.
    pub fn repeat(&self, n: usize) -> FlatSignature {
        FlatSignature(self.0.repeat(n))
    }

    pub fn congruent(&self, other: &FlatSignature) -> bool {
        self.0 == other.0
    }

    pub fn byte_size(&self) -> usize {
        self.0.iter().map(|k| k.width()).sum()
    }

    /// Canonical form: u32 little-endian component count, then one kind code
    /// per component.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.0.len());
        self.write_canonical(&mut out);
        out
    }

    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        let count = u32::try_from(self.0.len()).expect("signature longer than u32::MAX components");
        out.extend_from_slice(&count.to_le_bytes());
        out.extend(self.0.iter().map(|k| k.code()));
    }

    /// Parses a canonical signature from the front of `bytes`, returning it
    /// together with the number of bytes consumed.
    pub fn read_canonical(bytes: &[u8]) -> Result<(FlatSignature, usize), SignatureError> {
        let Some(prefix) = bytes.get(..4) else {
            return Err(SignatureError::Truncated {
                needed: 4,
                available: bytes.len(),
            });
        };
        let count = u32::from_le_bytes(prefix.try_into().unwrap()) as usize;
        let needed = 4usize.saturating_add(count);
        let Some(codes) = bytes.get(4..needed) else {
            return Err(SignatureError::Truncated {
                needed,
                available: bytes.len(),
            });
        };
        let kinds = codes
            .iter()
            .enumerate()
            .map(|(index, &code)| {
                FundamentalKind::from_code(code).ok_or(SignatureError::UnknownKind { index, code })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((FlatSignature(kinds), needed))
    }

    pub fn hash(&self) -> TypeHash {
        signature_hash(self)
    }

    /// Number of whole copies of `element` that make up this signature.
    pub fn multiplicity_of(&self, element: &FlatSignature) -> Result<usize, MultiplicityError> {
        element_multiplicity(self, element)
    }
}

impl From<Vec<FundamentalKind>> for FlatSignature {
    fn from(kinds: Vec<FundamentalKind>) -> Self {
        FlatSignature(kinds)
    }
}

impl fmt::Display for FlatSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str("]")
    }
}

pub fn congruent(a: &FlatSignature, b: &FlatSignature) -> bool {
    a.congruent(b)
}

pub fn canonical_bytes(sig: &FlatSignature) -> Vec<u8> {
    sig.canonical_bytes()
}

pub fn byte_size(sig: &FlatSignature) -> usize {
    sig.byte_size()
}

/// 64-bit hash of a signature's canonical bytes, carried in every frame
/// header as a cheap cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeHash(pub u64);

impl fmt::Display for TypeHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64-bit variant.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn signature_hash(sig: &FlatSignature) -> TypeHash {
    TypeHash(fnv1a64(&sig.canonical_bytes()))
}

/// Returns `n` when `buffer` is exactly `n >= 1` concatenated copies of
/// `element`.
pub fn element_multiplicity(
    buffer: &FlatSignature,
    element: &FlatSignature,
) -> Result<usize, MultiplicityError> {
    let (b, e) = (buffer.kinds(), element.kinds());
    if e.is_empty() {
        return Err(MultiplicityError::EmptyElement);
    }
    let not_a_multiple = MultiplicityError::NotAMultiple {
        buffer_len: b.len(),
        element_len: e.len(),
    };
    if b.is_empty() || b.len() % e.len() != 0 {
        return Err(not_a_multiple);
    }
    if b.chunks_exact(e.len()).all(|chunk| chunk == e) {
        Ok(b.len() / e.len())
    } else {
        Err(not_a_multiple)
    }
}

#[cfg(test)]
mod tests {
    use super::FundamentalKind::*;
    use super::*;

    fn f(k: FundamentalKind) -> TypeDescriptor {
        TypeDescriptor::fundamental(k)
    }

    fn sig(kinds: &[FundamentalKind]) -> FlatSignature {
        FlatSignature::new(kinds.to_vec())
    }

    #[test]
    fn kind_codes_and_widths() {
        let expected = [
            (I8, 1, 1),
            (I16, 2, 2),
            (I32, 3, 4),
            (I64, 4, 8),
            (U8, 5, 1),
            (U16, 6, 2),
            (U32, 7, 4),
            (U64, 8, 8),
            (F32, 9, 4),
            (F64, 10, 8),
            (Bool, 11, 1),
        ];
        for (kind, code, width) in expected {
            assert_eq!(kind.code(), code);
            assert_eq!(kind.width(), width);
            assert_eq!(FundamentalKind::from_code(code), Some(kind));
        }
        assert_eq!(FundamentalKind::from_code(0), None);
        assert_eq!(FundamentalKind::from_code(12), None);
    }

    #[test]
    fn flatten_scalar() {
        assert_eq!(f(F32).flatten(), sig(&[F32]));
    }

    #[test]
    fn flatten_nested_array() {
        let x = TypeDescriptor::array(TypeDescriptor::array(f(F32), 2).unwrap(), 3).unwrap();
        assert_eq!(x.flatten(), sig(&[F32; 6]));
    }

    #[test]
    fn flatten_record_in_field_order() {
        let r = TypeDescriptor::record([
            ("a", f(I32)),
            ("b", TypeDescriptor::array(f(F64), 2).unwrap()),
        ])
        .unwrap();
        assert_eq!(r.flatten(), sig(&[I32, F64, F64]));
    }

    #[test]
    fn field_names_do_not_matter() {
        let a = TypeDescriptor::record([("x", f(U8)), ("y", f(I16))]).unwrap();
        let b = TypeDescriptor::record([("p", f(U8)), ("q", f(I16))]).unwrap();
        assert_ne!(a, b);
        assert!(congruent(&a.flatten(), &b.flatten()));
    }

    #[test]
    fn invalid_descriptors_rejected() {
        assert_eq!(
            TypeDescriptor::array(f(F32), 0),
            Err(DescriptorError::EmptyArray)
        );
        assert_eq!(
            TypeDescriptor::record(Vec::<(String, TypeDescriptor)>::new()),
            Err(DescriptorError::EmptyRecord)
        );
        assert_eq!(
            TypeDescriptor::record([("a", f(F32)), ("a", f(F64))]),
            Err(DescriptorError::DuplicateField("a".into()))
        );
        assert_eq!(
            TypeDescriptor::record([("", f(F32))]),
            Err(DescriptorError::EmptyFieldName)
        );
    }

    #[test]
    fn congruence_examples() {
        let x = TypeDescriptor::array(TypeDescriptor::array(f(F32), 2).unwrap(), 3).unwrap();
        let y = TypeDescriptor::array(TypeDescriptor::array(f(F32), 3).unwrap(), 2).unwrap();
        assert!(congruent(&x.flatten(), &y.flatten()));
        assert!(!congruent(&sig(&[F32]), &sig(&[I32])));
        let s = sig(&[U16, Bool]);
        assert!(congruent(&s, &s));
    }

    #[test]
    fn canonical_bytes_layout() {
        assert_eq!(canonical_bytes(&sig(&[F32])), [0x01, 0, 0, 0, 0x09]);
        assert_eq!(
            canonical_bytes(&sig(&[I32, F64, F64])),
            [0x03, 0, 0, 0, 0x03, 0x0A, 0x0A]
        );
        assert_eq!(canonical_bytes(&sig(&[])), [0, 0, 0, 0]);
    }

    #[test]
    fn read_canonical_round_trip_and_errors() {
        let s = sig(&[I32, F64, Bool]);
        let mut bytes = s.canonical_bytes();
        bytes.push(0xEE);
        assert_eq!(FlatSignature::read_canonical(&bytes), Ok((s, 7)));
        assert_eq!(
            FlatSignature::read_canonical(&[2, 0, 0, 0, 9]),
            Err(SignatureError::Truncated {
                needed: 6,
                available: 5
            })
        );
        assert_eq!(
            FlatSignature::read_canonical(&[1, 0, 0, 0, 0x0C]),
            Err(SignatureError::UnknownKind { index: 0, code: 12 })
        );
        assert!(matches!(
            FlatSignature::read_canonical(&[1, 0]),
            Err(SignatureError::Truncated { needed: 4, .. })
        ));
    }

    #[test]
    fn byte_sizes() {
        assert_eq!(byte_size(&sig(&[F32])), 4);
        assert_eq!(byte_size(&sig(&[I32, F64, F64])), 20);
        assert_eq!(byte_size(&sig(&[])), 0);
    }

    #[test]
    fn multiplicity() {
        assert_eq!(element_multiplicity(&sig(&[F32; 6]), &sig(&[F32])), Ok(6));
        assert_eq!(element_multiplicity(&sig(&[F32]), &sig(&[F32])), Ok(1));
        assert!(matches!(
            element_multiplicity(&sig(&[F32, I32]), &sig(&[F32])),
            Err(MultiplicityError::NotAMultiple { .. })
        ));
        assert_eq!(
            element_multiplicity(&sig(&[I32, F64, I32, F64]), &sig(&[I32, F64])),
            Ok(2)
        );
        assert!(element_multiplicity(&sig(&[I32, F64, I32]), &sig(&[I32, F64])).is_err());
        assert!(element_multiplicity(&sig(&[]), &sig(&[F32])).is_err());
        assert_eq!(
            element_multiplicity(&sig(&[F32]), &sig(&[])),
            Err(MultiplicityError::EmptyElement)
        );
    }

    #[test]
    fn display_forms() {
        assert_eq!(sig(&[I32]).to_string(), "[I32]");
        assert_eq!(sig(&[F32, Bool]).to_string(), "[F32, BOOL]");
        assert_eq!(
            TypeHash(0xcbf29ce484222325).to_string(),
            "0xcbf29ce484222325"
        );
    }
}

//! Canonical binary encoding.
//!
//! Every signed payload and every hash in the system is computed over
//! this encoding, so it has to be deterministic and injective: fields
//! in declared order, fixed-width big-endian integers, u32 length
//! prefixes for variable-size data. The full byte layout is documented
//! in `docs/wire-format.md`; changing anything here is a format break.
//!
//! Decoding accepts untrusted bytes: all reads are bounds-checked,
//! length prefixes are validated against the remaining input before
//! any allocation, and nesting depth is capped.

use std::collections::BTreeSet;

/// Magic prefix of every top-level frame: "SW" + format version 1.
pub const FRAME_MAGIC: [u8; 3] = [0x53, 0x57, 0x01];

/// Maximum nesting depth a decoder will follow (messages may embed
/// messages as evidence).
pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("{0} bytes left after decoding a complete value")]
    TrailingBytes(usize),
    #[error("bad frame magic or unsupported version")]
    BadMagic,
    #[error("invalid tag {tag} for {what}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("length prefix {0} exceeds remaining input")]
    LengthOverrun(u64),
    #[error("invalid utf-8 in string field")]
    InvalidUtf8,
    #[error("nesting deeper than {MAX_DEPTH}")]
    DepthExceeded,
    #[error("collection not strictly ordered")]
    UnorderedSet,
}

/// Append-only encoder for the canonical format.
#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Encoder::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_bool(&mut self, v: bool) {
        self.put_u8(v as u8);
    }

    pub fn put_raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_u32(bytes.len() as u32);
        self.put_raw(bytes);
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_bytes(s.as_bytes());
    }
}

/// Cursor over untrusted input.
#[derive(Debug)]
pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
    depth: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Decoder {
            input,
            pos: 0,
            depth: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.remaining() != 0 {
            return Err(WireError::TrailingBytes(self.remaining()));
        }
        Ok(())
    }

    pub fn enter(&mut self) -> Result<(), WireError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(WireError::DepthExceeded);
        }
        Ok(())
    }

    pub fn exit(&mut self) {
        self.depth -= 1;
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::UnexpectedEof);
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn take_u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn take_u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn take_u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn take_bool(&mut self) -> Result<bool, WireError> {
        match self.take_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(WireError::InvalidTag { what: "bool", tag }),
        }
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn take_bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.take_u32()? as usize;
        if len > self.remaining() {
            return Err(WireError::LengthOverrun(len as u64));
        }
        Ok(self.take(len)?.to_vec())
    }

    pub fn take_str(&mut self) -> Result<String, WireError> {
        let bytes = self.take_bytes()?;
        String::from_utf8(bytes).map_err(|_| WireError::InvalidUtf8)
    }
}

/// Types with a canonical byte representation.
pub trait WireEncode {
    fn encode(&self, enc: &mut Encoder);

    fn to_wire(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }
}

/// Types decodable from the canonical representation.
pub trait WireDecode: Sized {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError>;

    /// Decodes a complete value, rejecting trailing bytes.
    fn from_wire(bytes: &[u8]) -> Result<Self, WireError> {
        let mut dec = Decoder::new(bytes);
        let value = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}

impl WireEncode for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(*self);
    }
}

impl WireDecode for u64 {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        dec.take_u64()
    }
}

impl WireEncode for String {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(self);
    }
}

impl WireDecode for String {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        dec.take_str()
    }
}

impl<T: WireEncode> WireEncode for Vec<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u32(self.len() as u32);
        for item in self {
            item.encode(enc);
        }
    }
}

impl<T: WireDecode> WireDecode for Vec<T> {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let len = dec.take_u32()? as usize;
        // Each element consumes at least one byte; reject lengths the
        // remaining input cannot possibly satisfy before reserving.
        if len > dec.remaining() {
            return Err(WireError::LengthOverrun(len as u64));
        }
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(T::decode(dec)?);
        }
        Ok(out)
    }
}

impl<T: WireEncode + Ord> WireEncode for BTreeSet<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u32(self.len() as u32);
        for item in self {
            item.encode(enc);
        }
    }
}

impl<T: WireDecode + Ord> WireDecode for BTreeSet<T> {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let len = dec.take_u32()? as usize;
        if len > dec.remaining() {
            return Err(WireError::LengthOverrun(len as u64));
        }
        let mut out = BTreeSet::new();
        for _ in 0..len {
            let item = T::decode(dec)?;
            // Injectivity requires a unique encoding per set; enforce
            // strictly ascending element order.
            if let Some(last) = out.last() {
                if *last >= item {
                    return Err(WireError::UnorderedSet);
                }
            }
            out.insert(item);
        }
        Ok(out)
    }
}

impl<T: WireEncode> WireEncode for Option<T> {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            None => enc.put_u8(0),
            Some(v) => {
                enc.put_u8(1);
                v.encode(enc);
            }
        }
    }
}

impl<T: WireDecode> WireDecode for Option<T> {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        match dec.take_u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(dec)?)),
            tag => Err(WireError::InvalidTag {
                what: "option",
                tag,
            }),
        }
    }
}

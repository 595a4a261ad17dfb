//! Length-prefixed field codec shared by every multi-field record.
//!
//! Each field is written as a little-endian `u32` length followed by the
//! field bytes. Command encodings prepend a single opcode byte.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes after last field")]
    TrailingBytes(usize),
    #[error("field has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid field value: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_opcode(op: u8) -> Self {
        Self { buf: vec![op] }
    }

    pub fn put(&mut self, field: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(field.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.put(&v.to_le_bytes())
    }

    /// Optional fields are encoded as an empty field when absent.
    pub fn put_opt(&mut self, field: Option<&[u8]>) -> &mut Self {
        self.put(field.unwrap_or(&[]))
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { rest: bytes }
    }

    pub fn take(&mut self) -> Result<&'a [u8], CodecError> {
        if self.rest.len() < 4 {
            return Err(CodecError::Truncated);
        }
        let (len, rest) = self.rest.split_at(4);
        let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
        if rest.len() < len {
            return Err(CodecError::Truncated);
        }
        let (field, rest) = rest.split_at(len);
        self.rest = rest;
        Ok(field)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let field = self.take()?;
        field.try_into().map_err(|_| CodecError::BadLength {
            expected: N,
            got: field.len(),
        })
    }

    pub fn take_u64(&mut self) -> Result<u64, CodecError> {
        self.take_array::<8>().map(u64::from_le_bytes)
    }

    pub fn take_opt(&mut self) -> Result<Option<&'a [u8]>, CodecError> {
        let field = self.take()?;
        Ok((!field.is_empty()).then_some(field))
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes(self.rest.len()))
        }
    }
}

/// Splits a command buffer into its opcode and argument bytes.
pub fn split_opcode(input: &[u8]) -> Result<(u8, &[u8]), CodecError> {
    input.split_first().map(|(op, rest)| (*op, rest)).ok_or(CodecError::Truncated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_round_trip() {
        let bytes = Encoder::new().put(b"abc").put_u64(7).put_opt(None).finish();
        let mut d = Decoder::new(&bytes);
        assert_eq!(d.take().unwrap(), b"abc");
        assert_eq!(d.take_u64().unwrap(), 7);
        assert_eq!(d.take_opt().unwrap(), None);
        d.finish().unwrap();
    }

    #[test]
    fn truncation_and_trailing_detected() {
        let bytes = Encoder::new().put(b"abcdef").finish();
        assert_eq!(Decoder::new(&bytes[..6]).take(), Err(CodecError::Truncated));
        let mut longer = bytes.clone();
        longer.push(0);
        let mut d = Decoder::new(&longer);
        d.take().unwrap();
        assert_eq!(d.finish(), Err(CodecError::TrailingBytes(1)));
    }

    #[test]
    fn fixed_width_fields_checked() {
        let bytes = Encoder::new().put(&[1, 2, 3]).finish();
        assert_eq!(
            Decoder::new(&bytes).take_u64(),
            Err(CodecError::BadLength { expected: 8, got: 3 })
        );
    }
}

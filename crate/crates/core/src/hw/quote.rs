use crate::codec::CodecError;
use crate::crypto::{sig_verify, Signature, SIGNATURE_LEN};

use super::{Measurement, PublicParams};

/// Attestation evidence `(hdl, tag_P, in, out, σ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Quote {
    pub handle: u64,
    pub tag: Measurement,
    pub input: Vec<u8>,
    pub output: Vec<u8>,
    pub sigma: Signature,
}

impl Quote {
    /// Canonical signed body: `id(8) ‖ tag(32) ‖ len(in) ‖ in ‖ len(out) ‖ out`.
    pub fn signed_bytes(handle: u64, tag: &Measurement, input: &[u8], output: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 + 8 + input.len() + output.len());
        out.extend_from_slice(&handle.to_le_bytes());
        out.extend_from_slice(tag.as_bytes());
        out.extend_from_slice(&(input.len() as u32).to_le_bytes());
        out.extend_from_slice(input);
        out.extend_from_slice(&(output.len() as u32).to_le_bytes());
        out.extend_from_slice(output);
        out
    }

    pub fn body(&self) -> Vec<u8> {
        Self::signed_bytes(self.handle, &self.tag, &self.input, &self.output)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body();
        out.extend_from_slice(self.sigma.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        fn split(b: &[u8], n: usize) -> Result<(&[u8], &[u8]), CodecError> {
            (b.len() >= n).then(|| b.split_at(n)).ok_or(CodecError::Truncated)
        }
        fn field(b: &[u8]) -> Result<(&[u8], &[u8]), CodecError> {
            let (len, rest) = split(b, 4)?;
            split(rest, u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize)
        }
        let (id, rest) = split(bytes, 8)?;
        let (tag, rest) = split(rest, 32)?;
        let (input, rest) = field(rest)?;
        let (output, rest) = field(rest)?;
        let (sigma, rest) = split(rest, SIGNATURE_LEN)?;
        if !rest.is_empty() {
            return Err(CodecError::TrailingBytes(rest.len()));
        }
        Ok(Self {
            handle: u64::from_le_bytes(id.try_into().expect("8 bytes")),
            tag: Measurement(tag.try_into().expect("32 bytes")),
            input: input.to_vec(),
            output: output.to_vec(),
            sigma: Signature(sigma.try_into().expect("64 bytes")),
        })
    }
}

/// `HW.QuoteVerify`: 1 iff σ verifies under the attestation key in `pms`
/// over the exact canonical body. Never fails.
pub fn quote_verify(pms: &PublicParams, quote: &Quote) -> bool {
    sig_verify(&pms.vk_quote, &quote.sigma, &quote.body())
}

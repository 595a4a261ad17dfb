use crate::codec::{CodecError, Decoder, Encoder};
use crate::crypto::{Address, SymCiphertext, ADDRESS_LEN};

pub const SEAL_MAGIC: &[u8; 6] = b"DSEAL1";

/// Encrypted balance snapshot persisted outside the enclave.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedRecord {
    pub addr: Address,
    pub seq: u64,
    pub c_update: SymCiphertext,
}

impl SealedRecord {
    /// `"DSEAL1" ‖ addr(25) ‖ seq(8) ‖ len(ct) ‖ ct`
    pub fn to_frame(&self) -> Vec<u8> {
        let ct = self.c_update.to_bytes();
        let mut out = Vec::with_capacity(6 + ADDRESS_LEN + 8 + 4 + ct.len());
        out.extend_from_slice(SEAL_MAGIC);
        out.extend_from_slice(&self.addr.to_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&(ct.len() as u32).to_le_bytes());
        out.extend_from_slice(&ct);
        out
    }

    /// Parses one frame from the front of `bytes`; returns it with the
    /// number of bytes consumed.
    pub fn parse_frame(bytes: &[u8]) -> Result<(Self, usize), CodecError> {
        const HEADER: usize = 6 + ADDRESS_LEN + 8 + 4;
        if bytes.len() < HEADER {
            return Err(CodecError::Truncated);
        }
        if &bytes[..6] != SEAL_MAGIC {
            return Err(CodecError::Invalid("seal magic"));
        }
        let addr = Address::from_bytes(&bytes[6..31]).map_err(|_| CodecError::Invalid("addr"))?;
        let seq = u64::from_le_bytes(bytes[31..39].try_into().expect("8 bytes"));
        let len = u32::from_le_bytes(bytes[39..43].try_into().expect("4 bytes")) as usize;
        let end = HEADER.checked_add(len).ok_or(CodecError::Truncated)?;
        if bytes.len() < end {
            return Err(CodecError::Truncated);
        }
        let c_update =
            SymCiphertext::from_bytes(&bytes[HEADER..end]).map_err(|_| CodecError::Invalid("ciphertext"))?;
        Ok((Self { addr, seq, c_update }, end))
    }

    pub fn from_frame(bytes: &[u8]) -> Result<Self, CodecError> {
        let (rec, used) = Self::parse_frame(bytes)?;
        if used != bytes.len() {
            return Err(CodecError::TrailingBytes(bytes.len() - used));
        }
        Ok(rec)
    }
}

/// Plaintext under `c_update`. `seq` and `addr` repeat the frame header so a
/// ciphertext cannot be re-labelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceSnapshot {
    pub addr: Address,
    pub seq: u64,
    pub balance: u64,
    /// Total confirmed deposits already credited to `balance`.
    pub credited: u64,
}

impl BalanceSnapshot {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.addr.to_bytes())
            .put_u64(self.seq)
            .put_u64(self.balance)
            .put_u64(self.credited)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let addr = Address::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("addr"))?;
        let snap = Self {
            addr,
            seq: d.take_u64()?,
            balance: d.take_u64()?,
            credited: d.take_u64()?,
        };
        d.finish()?;
        Ok(snap)
    }
}

//! The two enclave programs and the data they exchange.

pub mod delegatee;
mod error;
pub mod owner;
mod sealed;
mod tx;

use std::fmt;

pub use error::EnclaveError;
pub use sealed::{BalanceSnapshot, SealedRecord, SEAL_MAGIC};
pub use tx::{Transaction, TxId, TxMetadata, TX_SIGNED_LEN, TX_WIRE_LEN};

pub const SESSION_ID_LEN: usize = 16;

/// 128-bit session identifier chosen by the delegatee enclave.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SessionId(pub [u8; SESSION_ID_LEN]);

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({})", hex::encode(self.0))
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// Message signed by the delegatee over a provisioned key: `sid ‖ ct_r`.
pub fn provision_signing_bytes(sid: &SessionId, ct_r: &[u8]) -> Vec<u8> {
    let mut out = sid.0.to_vec();
    out.extend_from_slice(ct_r);
    out
}

use std::fmt;

use crate::codec::CodecError;
use crate::crypto::{
    sha256d, sig_sign, sig_verify, Address, SigPublicKey, SigSecretKey, Signature, ADDRESS_LEN,
    PUBLIC_KEY_LEN, SIGNATURE_LEN,
};

/// `addr(25) ‖ pk_Tx(33) ‖ recipient(25) ‖ amount(8) ‖ nonce(8)`
pub const TX_SIGNED_LEN: usize = ADDRESS_LEN + PUBLIC_KEY_LEN + ADDRESS_LEN + 8 + 8;
pub const TX_WIRE_LEN: usize = TX_SIGNED_LEN + SIGNATURE_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TxMetadata {
    pub recipient: Address,
    /// Amount in µBTC.
    pub amount: u64,
    pub nonce: [u8; 8],
}

/// Spendable transaction `(addr, pk_Tx, metadata, σ_Tx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub addr: Address,
    pub pk_tx: SigPublicKey,
    pub metadata: TxMetadata,
    pub sigma: Signature,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub [u8; 32]);

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", hex::encode(self.0))
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

fn signed_body(addr: &Address, pk_tx: &SigPublicKey, meta: &TxMetadata) -> [u8; TX_SIGNED_LEN] {
    let mut out = [0u8; TX_SIGNED_LEN];
    out[..25].copy_from_slice(&addr.to_bytes());
    out[25..58].copy_from_slice(pk_tx.as_bytes());
    out[58..83].copy_from_slice(&meta.recipient.to_bytes());
    out[83..91].copy_from_slice(&meta.amount.to_le_bytes());
    out[91..99].copy_from_slice(&meta.nonce);
    out
}

impl Transaction {
    pub fn sign(sk: &SigSecretKey, addr: Address, metadata: TxMetadata) -> Self {
        let pk_tx = sk.public_key();
        let sigma = sig_sign(sk, &signed_body(&addr, &pk_tx, &metadata));
        Self {
            addr,
            pk_tx,
            metadata,
            sigma,
        }
    }

    pub fn signed_bytes(&self) -> [u8; TX_SIGNED_LEN] {
        signed_body(&self.addr, &self.pk_tx, &self.metadata)
    }

    pub fn verify_signature(&self) -> bool {
        sig_verify(&self.pk_tx, &self.sigma, &self.signed_bytes())
    }

    pub fn amount(&self) -> u64 {
        self.metadata.amount
    }

    pub fn to_bytes(&self) -> [u8; TX_WIRE_LEN] {
        let mut out = [0u8; TX_WIRE_LEN];
        out[..TX_SIGNED_LEN].copy_from_slice(&self.signed_bytes());
        out[TX_SIGNED_LEN..].copy_from_slice(self.sigma.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != TX_WIRE_LEN {
            return Err(CodecError::BadLength {
                expected: TX_WIRE_LEN,
                got: bytes.len(),
            });
        }
        let addr = Address::from_bytes(&bytes[..25]).map_err(|_| CodecError::Invalid("addr"))?;
        let pk_tx = SigPublicKey::from_bytes(&bytes[25..58]).map_err(|_| CodecError::Invalid("pk_Tx"))?;
        let recipient = Address::from_bytes(&bytes[58..83]).map_err(|_| CodecError::Invalid("recipient"))?;
        Ok(Self {
            addr,
            pk_tx,
            metadata: TxMetadata {
                recipient,
                amount: u64::from_le_bytes(bytes[83..91].try_into().expect("8 bytes")),
                nonce: bytes[91..99].try_into().expect("8 bytes"),
            },
            sigma: Signature(bytes[99..].try_into().expect("64 bytes")),
        })
    }

    pub fn id(&self) -> TxId {
        TxId(sha256d(&self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_address, sig_keygen};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample() -> Transaction {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let kp = sig_keygen(&mut rng);
        let to = derive_address(&sig_keygen(&mut rng).vk);
        Transaction::sign(
            &kp.sk,
            derive_address(&kp.vk),
            TxMetadata {
                recipient: to,
                amount: 200,
                nonce: [9; 8],
            },
        )
    }

    #[test]
    fn wire_layout_and_round_trip() {
        let tx = sample();
        let bytes = tx.to_bytes();
        assert_eq!(bytes.len(), 163);
        assert_eq!(&bytes[..25], &tx.addr.to_bytes());
        assert_eq!(&bytes[83..91], &200u64.to_le_bytes());
        assert_eq!(Transaction::from_bytes(&bytes).unwrap(), tx);
        assert!(tx.verify_signature());
    }

    #[test]
    fn amount_change_breaks_signature() {
        let mut tx = sample();
        tx.metadata.amount += 1;
        assert!(!tx.verify_signature());
    }
}

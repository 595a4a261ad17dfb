//! Symmetric encryption, ECDSA signatures, hybrid public-key encryption,
//! hashing and testnet address derivation.
//!
//! All randomness is drawn from a caller-supplied [`CryptoRngCore`], so
//! every primitive is reproducible under a seeded generator.

mod address;
pub mod backend;
mod hash;
mod pke;
mod sig;
mod sym;

pub use address::{derive_address, Address, ADDRESS_LEN, TESTNET_P2PKH};
pub use hash::{hash160, sha256, sha256d};
pub use pke::{pke_dec, pke_enc, pke_keygen, PkeCiphertext, PkeKeypair, PkePublicKey, PkeSecretKey};
pub use rand_core::CryptoRngCore;
pub use sig::{
    sig_keygen, sig_sign, sig_verify, SigKeypair, SigPublicKey, SigSecretKey, Signature,
    PUBLIC_KEY_LEN, SIGNATURE_LEN,
};
pub use sym::{se_dec, se_enc, se_kgen, SymCiphertext, SymKey, NONCE_LEN, SYM_KEY_LEN, TAG_LEN};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("ciphertext failed integrity check")]
    IntegrityFailure,
    #[error("public-key decryption failed")]
    DecryptFailure,
    #[error("invalid key encoding")]
    InvalidKey,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("invalid address: {0}")]
    InvalidAddress(&'static str),
}

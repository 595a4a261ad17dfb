use std::fmt;

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{SigningKey, VerifyingKey};
use rand_core::CryptoRngCore;

use super::CryptoError;

pub const PUBLIC_KEY_LEN: usize = 33;
pub const SIGNATURE_LEN: usize = 64;

/// secp256k1 signing scalar.
#[derive(Clone)]
pub struct SigSecretKey(SigningKey);

/// secp256k1 verification point, 33-byte compressed SEC1 encoding on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SigPublicKey([u8; PUBLIC_KEY_LEN]);

/// Compact `r ‖ s` ECDSA signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

#[derive(Debug, Clone)]
pub struct SigKeypair {
    pub sk: SigSecretKey,
    pub vk: SigPublicKey,
}

impl SigSecretKey {
    pub fn random(rng: &mut (impl CryptoRngCore + ?Sized)) -> Self {
        let mut rng = rng;
        Self(SigningKey::random(&mut rng))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        SigningKey::from_slice(bytes)
            .map(Self)
            .map_err(|_| CryptoError::InvalidKey)
    }

    /// Raw scalar bytes. Only enclave sealing and the planted-leak games read this.
    pub(crate) fn expose(&self) -> [u8; 32] {
        self.0.to_bytes().into()
    }

    pub fn public_key(&self) -> SigPublicKey {
        let point = self.0.verifying_key().to_encoded_point(true);
        SigPublicKey(point.as_bytes().try_into().expect("compressed point"))
    }
}

impl fmt::Debug for SigSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigSecretKey(..)")
    }
}

impl SigPublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let vk = VerifyingKey::from_sec1_bytes(bytes).map_err(|_| CryptoError::InvalidKey)?;
        let point = vk.to_encoded_point(true);
        Ok(Self(point.as_bytes().try_into().expect("compressed point")))
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey::from_sec1_bytes(&self.0).expect("validated at construction")
    }
}

impl fmt::Debug for SigPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigPublicKey({})", hex::encode(self.0))
    }
}

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes
            .try_into()
            .map(Self)
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(self.0))
    }
}

pub fn sig_keygen(rng: &mut (impl CryptoRngCore + ?Sized)) -> SigKeypair {
    let sk = SigSecretKey::random(rng);
    let vk = sk.public_key();
    SigKeypair { sk, vk }
}

/// ECDSA over SHA-256 of `msg`, RFC 6979 nonces, low-S normalized.
pub fn sig_sign(sk: &SigSecretKey, msg: &[u8]) -> Signature {
    let sig: k256::ecdsa::Signature = sk.0.sign(msg);
    Signature(sig.to_bytes().into())
}

pub fn sig_verify(vk: &SigPublicKey, sig: &Signature, msg: &[u8]) -> bool {
    let Ok(sig) = k256::ecdsa::Signature::from_slice(&sig.0) else {
        return false;
    };
    vk.verifying_key().verify(msg, &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn honest_triple_verifies() {
        let kp = sig_keygen(&mut ChaCha20Rng::seed_from_u64(1));
        let sig = sig_sign(&kp.sk, b"pay bob 200");
        assert!(sig_verify(&kp.vk, &sig, b"pay bob 200"));
    }

    #[test]
    fn appended_byte_rejected() {
        let kp = sig_keygen(&mut ChaCha20Rng::seed_from_u64(2));
        let sig = sig_sign(&kp.sk, b"m");
        assert!(!sig_verify(&kp.vk, &sig, b"m\x00"));
    }

    #[test]
    fn all_signature_bit_flips_rejected() {
        let kp = sig_keygen(&mut ChaCha20Rng::seed_from_u64(3));
        let sig = sig_sign(&kp.sk, b"msg");
        for i in 0..256 {
            let mut m = sig;
            m.0[i / 8] ^= 1 << (i % 8);
            assert!(!sig_verify(&kp.vk, &m, b"msg"), "bit {i}");
        }
        for i in 256..512 {
            let mut m = sig;
            m.0[i / 8] ^= 1 << (i % 8);
            assert!(!sig_verify(&kp.vk, &m, b"msg"), "bit {i}");
        }
    }

    #[test]
    fn other_key_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = sig_keygen(&mut rng);
        let b = sig_keygen(&mut rng);
        assert!(!sig_verify(&b.vk, &sig_sign(&a.sk, b"x"), b"x"));
    }

    #[test]
    fn malformed_keys_rejected() {
        assert_eq!(SigPublicKey::from_bytes(&[5u8; 33]).err(), Some(CryptoError::InvalidKey));
        assert_eq!(SigPublicKey::from_bytes(&[0u8; 12]).err(), Some(CryptoError::InvalidKey));
        assert_eq!(SigSecretKey::from_bytes(&[0u8; 32]).err(), Some(CryptoError::InvalidKey));
    }

    #[test]
    fn secret_round_trip_preserves_public_key() {
        let kp = sig_keygen(&mut ChaCha20Rng::seed_from_u64(5));
        let back = SigSecretKey::from_bytes(&kp.sk.expose()).unwrap();
        assert_eq!(back.public_key(), kp.vk);
    }
}

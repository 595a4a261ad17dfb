use std::fmt;

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce, Tag};
use rand_core::CryptoRngCore;

use super::CryptoError;

pub const SYM_KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// 256-bit key for the authenticated symmetric cipher (AES-256-GCM).
#[derive(Clone, PartialEq, Eq)]
pub struct SymKey([u8; SYM_KEY_LEN]);

impl SymKey {
    pub fn from_bytes(bytes: [u8; SYM_KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SYM_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymCiphertext {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SymCiphertext {
    /// `nonce(12) ‖ body ‖ tag(16)`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.body.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(CryptoError::MalformedCiphertext);
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(Self {
            nonce: nonce.try_into().expect("nonce length"),
            body: body.to_vec(),
            tag: tag.try_into().expect("tag length"),
        })
    }

    pub fn encoded_len(&self) -> usize {
        NONCE_LEN + self.body.len() + TAG_LEN
    }
}

pub fn se_kgen(rng: &mut (impl CryptoRngCore + ?Sized)) -> SymKey {
    let mut key = [0u8; SYM_KEY_LEN];
    rng.fill_bytes(&mut key);
    SymKey(key)
}

pub fn se_enc(rng: &mut (impl CryptoRngCore + ?Sized), key: &SymKey, msg: &[u8]) -> SymCiphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = Aes256Gcm::new(key.0.as_ref().into());
    let mut body = msg.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), b"", &mut body)
        .expect("plaintext within AES-GCM length limit");
    SymCiphertext {
        nonce,
        body,
        tag: tag.into(),
    }
}

pub fn se_dec(key: &SymKey, ct: &SymCiphertext) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new(key.0.as_ref().into());
    let mut body = ct.body.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&ct.nonce),
            b"",
            &mut body,
            Tag::from_slice(&ct.tag),
        )
        .map_err(|_| CryptoError::IntegrityFailure)?;
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn keygen_is_seed_deterministic_and_distinct_otherwise() {
        assert_eq!(se_kgen(&mut rng(0)), se_kgen(&mut rng(0)));
        let mut r = rng(1);
        assert_ne!(se_kgen(&mut r), se_kgen(&mut r));
    }

    #[test]
    fn key_length_over_many_trials() {
        let mut r = rng(2);
        for _ in 0..1000 {
            assert_eq!(se_kgen(&mut r).as_bytes().len(), 32);
        }
    }

    #[test]
    fn nonce_freshness() {
        let mut r = rng(3);
        let k = se_kgen(&mut r);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            assert!(seen.insert(se_enc(&mut r, &k, b"same message").to_bytes()));
        }
    }

    #[test]
    fn empty_message_round_trips() {
        let mut r = rng(4);
        let k = se_kgen(&mut r);
        let ct = se_enc(&mut r, &k, b"");
        assert_eq!(ct.encoded_len(), NONCE_LEN + TAG_LEN);
        assert_eq!(se_dec(&k, &ct).unwrap(), b"");
    }

    #[test]
    fn wrong_key_rejected() {
        let mut r = rng(5);
        let k = se_kgen(&mut r);
        let other = se_kgen(&mut r);
        let ct = se_enc(&mut r, &k, b"balance");
        assert_eq!(se_dec(&other, &ct), Err(CryptoError::IntegrityFailure));
    }

    #[test]
    fn every_bit_flip_rejected() {
        let mut r = rng(6);
        let k = se_kgen(&mut r);
        let bytes = se_enc(&mut r, &k, b"short msg").to_bytes();
        for i in 0..bytes.len() * 8 {
            let mut m = bytes.clone();
            m[i / 8] ^= 1 << (i % 8);
            let ct = SymCiphertext::from_bytes(&m).unwrap();
            assert_eq!(se_dec(&k, &ct), Err(CryptoError::IntegrityFailure), "bit {i}");
        }
    }

    #[test]
    fn short_encoding_is_malformed() {
        assert_eq!(
            SymCiphertext::from_bytes(&[0u8; 27]),
            Err(CryptoError::MalformedCiphertext)
        );
    }
}

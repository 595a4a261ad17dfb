//! Deliberately weak scheme implementations. The games must tell these
//! apart from the production suite; none is used outside the harness.

use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::{PublicKey, SecretKey};
use rand_core::CryptoRngCore;

use crate::crypto::backend::{PkeScheme, SignatureScheme, SymmetricScheme};
use crate::crypto::{sha256, CryptoError};

fn keystream_xor(seed: &[u8], msg: &[u8]) -> Vec<u8> {
    msg.chunks(32)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let mut block = seed.to_vec();
            block.extend_from_slice(&(i as u64).to_le_bytes());
            let pad = sha256(&block);
            chunk.iter().zip(pad).map(|(m, p)| m ^ p).collect::<Vec<_>>()
        })
        .collect()
}

/// Deterministic stream cipher: the same key and message always give the
/// same ciphertext, and there is no integrity tag.
#[derive(Debug, Default, Clone, Copy)]
pub struct FixedNonceXor;

impl SymmetricScheme for FixedNonceXor {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Vec<u8> {
        let mut k = vec![0u8; 32];
        rng.fill_bytes(&mut k);
        k
    }

    fn encrypt(&self, _rng: &mut dyn CryptoRngCore, key: &[u8], msg: &[u8]) -> Vec<u8> {
        keystream_xor(key, msg)
    }

    fn decrypt(&self, key: &[u8], ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
        Ok(keystream_xor(key, ct))
    }
}

/// "Signs" by returning the message itself.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentitySigner;

impl SignatureScheme for IdentitySigner {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> (Vec<u8>, Vec<u8>) {
        let mut k = vec![0u8; 32];
        rng.fill_bytes(&mut k);
        (k.clone(), k)
    }

    fn sign(&self, _sk: &[u8], msg: &[u8]) -> Vec<u8> {
        msg.to_vec()
    }

    fn verify(&self, _vk: &[u8], sig: &[u8], msg: &[u8]) -> bool {
        sig == msg
    }
}

/// ECDH key agreement followed by a bare keystream: confidential against
/// passive attackers but freely malleable.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnauthenticatedPke;

const EPHEMERAL_LEN: usize = 33;

fn shared_seed(sk: &SecretKey, pk: &PublicKey) -> [u8; 32] {
    let shared = k256::ecdh::diffie_hellman(sk.to_nonzero_scalar(), pk.as_affine());
    sha256(shared.raw_secret_bytes())
}

impl PkeScheme for UnauthenticatedPke {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> (Vec<u8>, Vec<u8>) {
        let mut rng = rng;
        let sk = SecretKey::random(&mut rng);
        let pk = sk.public_key().to_encoded_point(true).as_bytes().to_vec();
        (sk.to_bytes().to_vec(), pk)
    }

    fn encrypt(&self, rng: &mut dyn CryptoRngCore, pk: &[u8], msg: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let mut rng = rng;
        let pk = PublicKey::from_sec1_bytes(pk).map_err(|_| CryptoError::InvalidKey)?;
        let eph = SecretKey::random(&mut rng);
        let mut out = eph.public_key().to_encoded_point(true).as_bytes().to_vec();
        out.extend(keystream_xor(&shared_seed(&eph, &pk), msg));
        Ok(out)
    }

    fn decrypt(&self, sk: &[u8], ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let sk = SecretKey::from_slice(sk).map_err(|_| CryptoError::InvalidKey)?;
        if ct.len() < EPHEMERAL_LEN {
            return Err(CryptoError::MalformedCiphertext);
        }
        let (eph, body) = ct.split_at(EPHEMERAL_LEN);
        let eph = PublicKey::from_sec1_bytes(eph).map_err(|_| CryptoError::DecryptFailure)?;
        Ok(keystream_xor(&shared_seed(&sk, &eph), body))
    }
}

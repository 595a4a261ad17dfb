//! Byte-level scheme interfaces so the security games can run against the
//! production primitives or against deliberately weakened stand-ins.

use rand_core::CryptoRngCore;

use super::{
    pke_dec, pke_enc, pke_keygen, se_dec, se_enc, se_kgen, sig_keygen, sig_sign, sig_verify,
    CryptoError, PkeCiphertext, PkePublicKey, PkeSecretKey, SigPublicKey, SigSecretKey,
    Signature, SymCiphertext, SymKey,
};

pub trait SymmetricScheme {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Vec<u8>;
    fn encrypt(&self, rng: &mut dyn CryptoRngCore, key: &[u8], msg: &[u8]) -> Vec<u8>;
    fn decrypt(&self, key: &[u8], ct: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

pub trait SignatureScheme {
    /// Returns `(signing key, verification key)`.
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> (Vec<u8>, Vec<u8>);
    fn sign(&self, sk: &[u8], msg: &[u8]) -> Vec<u8>;
    fn verify(&self, vk: &[u8], sig: &[u8], msg: &[u8]) -> bool;
}

pub trait PkeScheme {
    /// Returns `(decryption key, encryption key)`.
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> (Vec<u8>, Vec<u8>);
    fn encrypt(&self, rng: &mut dyn CryptoRngCore, pk: &[u8], msg: &[u8]) -> Result<Vec<u8>, CryptoError>;
    fn decrypt(&self, sk: &[u8], ct: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

/// AES-256-GCM, the suite's SE instantiation.
#[derive(Debug, Default, Clone, Copy)]
pub struct AesGcm;

/// ECDSA over secp256k1 with SHA-256.
#[derive(Debug, Default, Clone, Copy)]
pub struct EcdsaSecp256k1;

/// ECDH + HKDF + AES-GCM hybrid encryption over secp256k1.
#[derive(Debug, Default, Clone, Copy)]
pub struct EciesSecp256k1;

fn sym_key(key: &[u8]) -> Result<SymKey, CryptoError> {
    key.try_into()
        .map(SymKey::from_bytes)
        .map_err(|_| CryptoError::InvalidKey)
}

impl SymmetricScheme for AesGcm {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> Vec<u8> {
        se_kgen(rng).as_bytes().to_vec()
    }

    fn encrypt(&self, rng: &mut dyn CryptoRngCore, key: &[u8], msg: &[u8]) -> Vec<u8> {
        let key = sym_key(key).expect("key produced by keygen");
        se_enc(rng, &key, msg).to_bytes()
    }

    fn decrypt(&self, key: &[u8], ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let ct = SymCiphertext::from_bytes(ct).map_err(|_| CryptoError::IntegrityFailure)?;
        se_dec(&sym_key(key)?, &ct)
    }
}

impl SignatureScheme for EcdsaSecp256k1 {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> (Vec<u8>, Vec<u8>) {
        let kp = sig_keygen(rng);
        (kp.sk.expose().to_vec(), kp.vk.as_bytes().to_vec())
    }

    fn sign(&self, sk: &[u8], msg: &[u8]) -> Vec<u8> {
        let sk = SigSecretKey::from_bytes(sk).expect("key produced by keygen");
        sig_sign(&sk, msg).as_bytes().to_vec()
    }

    fn verify(&self, vk: &[u8], sig: &[u8], msg: &[u8]) -> bool {
        match (SigPublicKey::from_bytes(vk), Signature::from_slice(sig)) {
            (Ok(vk), Ok(sig)) => sig_verify(&vk, &sig, msg),
            _ => false,
        }
    }
}

impl PkeScheme for EciesSecp256k1 {
    fn keygen(&self, rng: &mut dyn CryptoRngCore) -> (Vec<u8>, Vec<u8>) {
        let kp = pke_keygen(rng);
        (kp.sk.expose().to_vec(), kp.pk.as_bytes().to_vec())
    }

    fn encrypt(&self, rng: &mut dyn CryptoRngCore, pk: &[u8], msg: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let pk = PkePublicKey::from_bytes(pk)?;
        Ok(pke_enc(rng, &pk, msg).to_bytes())
    }

    fn decrypt(&self, sk: &[u8], ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let sk = PkeSecretKey::from_bytes(sk)?;
        let ct = PkeCiphertext::from_bytes(ct).map_err(|_| CryptoError::DecryptFailure)?;
        pke_dec(&sk, &ct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn production_backends_are_correct() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let k = AesGcm.keygen(&mut rng);
        let ct = AesGcm.encrypt(&mut rng, &k, b"m");
        assert_eq!(AesGcm.decrypt(&k, &ct).unwrap(), b"m");

        let (sk, vk) = EcdsaSecp256k1.keygen(&mut rng);
        let sig = EcdsaSecp256k1.sign(&sk, b"m");
        assert!(EcdsaSecp256k1.verify(&vk, &sig, b"m"));
        assert!(!EcdsaSecp256k1.verify(&vk, &sig[..10], b"m"));

        let (sk, pk) = EciesSecp256k1.keygen(&mut rng);
        let ct = EciesSecp256k1.encrypt(&mut rng, &pk, b"m").unwrap();
        assert_eq!(EciesSecp256k1.decrypt(&sk, &ct).unwrap(), b"m");
    }
}

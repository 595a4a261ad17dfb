//! Hybrid public-key encryption: ephemeral secp256k1 ECDH, HKDF-SHA256 key
//! derivation, then the authenticated symmetric cipher.

use std::fmt;

use hkdf::Hkdf;
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::{PublicKey, SecretKey};
use rand_core::CryptoRngCore;
use sha2::Sha256;

use super::sym::{se_dec, se_enc, SymCiphertext, SymKey};
use super::CryptoError;
use super::PUBLIC_KEY_LEN;

const KDF_INFO: &[u8] = b"delegacoin/pke/v1";

#[derive(Clone)]
pub struct PkeSecretKey(SecretKey);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PkePublicKey([u8; PUBLIC_KEY_LEN]);

#[derive(Debug, Clone)]
pub struct PkeKeypair {
    pub sk: PkeSecretKey,
    pub pk: PkePublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PkeCiphertext {
    pub ephemeral: [u8; PUBLIC_KEY_LEN],
    pub payload: SymCiphertext,
}

impl PkeSecretKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        SecretKey::from_slice(bytes)
            .map(Self)
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub(crate) fn expose(&self) -> [u8; 32] {
        self.0.to_bytes().into()
    }

    pub fn public_key(&self) -> PkePublicKey {
        PkePublicKey(compress(&self.0.public_key()))
    }
}

impl fmt::Debug for PkeSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PkeSecretKey(..)")
    }
}

impl PkePublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let pk = PublicKey::from_sec1_bytes(bytes).map_err(|_| CryptoError::InvalidKey)?;
        Ok(Self(compress(&pk)))
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for PkePublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PkePublicKey({})", hex::encode(self.0))
    }
}

impl PkeCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.ephemeral.to_vec();
        out.extend_from_slice(&self.payload.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < PUBLIC_KEY_LEN {
            return Err(CryptoError::MalformedCiphertext);
        }
        let (eph, rest) = bytes.split_at(PUBLIC_KEY_LEN);
        Ok(Self {
            ephemeral: eph.try_into().expect("point length"),
            payload: SymCiphertext::from_bytes(rest)?,
        })
    }
}

fn compress(pk: &PublicKey) -> [u8; PUBLIC_KEY_LEN] {
    pk.to_encoded_point(true)
        .as_bytes()
        .try_into()
        .expect("compressed point")
}

fn derive_key(shared: &[u8], ephemeral: &[u8; PUBLIC_KEY_LEN], recipient: &[u8; PUBLIC_KEY_LEN]) -> SymKey {
    let mut salt = [0u8; 2 * PUBLIC_KEY_LEN];
    salt[..PUBLIC_KEY_LEN].copy_from_slice(ephemeral);
    salt[PUBLIC_KEY_LEN..].copy_from_slice(recipient);
    let mut okm = [0u8; 32];
    Hkdf::<Sha256>::new(Some(&salt), shared)
        .expand(KDF_INFO, &mut okm)
        .expect("32 bytes is a valid HKDF length");
    SymKey::from_bytes(okm)
}

pub fn pke_keygen(rng: &mut (impl CryptoRngCore + ?Sized)) -> PkeKeypair {
    let mut rng = rng;
    let sk = PkeSecretKey(SecretKey::random(&mut rng));
    let pk = sk.public_key();
    PkeKeypair { sk, pk }
}

pub fn pke_enc(rng: &mut (impl CryptoRngCore + ?Sized), pk: &PkePublicKey, msg: &[u8]) -> PkeCiphertext {
    let mut r = &mut *rng;
    let eph = SecretKey::random(&mut r);
    let eph_pub = compress(&eph.public_key());
    let recipient = PublicKey::from_sec1_bytes(&pk.0).expect("validated at construction");
    let shared = k256::ecdh::diffie_hellman(eph.to_nonzero_scalar(), recipient.as_affine());
    let key = derive_key(shared.raw_secret_bytes(), &eph_pub, &pk.0);
    PkeCiphertext {
        ephemeral: eph_pub,
        payload: se_enc(rng, &key, msg),
    }
}

pub fn pke_dec(sk: &PkeSecretKey, ct: &PkeCiphertext) -> Result<Vec<u8>, CryptoError> {
    let eph = PublicKey::from_sec1_bytes(&ct.ephemeral).map_err(|_| CryptoError::DecryptFailure)?;
    let shared = k256::ecdh::diffie_hellman(sk.0.to_nonzero_scalar(), eph.as_affine());
    let key = derive_key(shared.raw_secret_bytes(), &ct.ephemeral, &sk.public_key().0);
    se_dec(&key, &ct.payload).map_err(|_| CryptoError::DecryptFailure)
}

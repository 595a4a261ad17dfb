use std::fmt;
use std::str::FromStr;

use super::hash::{hash160, sha256d};
use super::{CryptoError, SigPublicKey};

/// Bitcoin testnet pay-to-pubkey-hash version byte.
pub const TESTNET_P2PKH: u8 = 0x6f;
pub const ADDRESS_LEN: usize = 25;

/// Base58Check P2PKH address: `version ‖ hash160(pk) ‖ checksum`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    version: u8,
    payload: [u8; 20],
    checksum: [u8; 4],
}

fn checksum(version: u8, payload: &[u8; 20]) -> [u8; 4] {
    let mut buf = [0u8; 21];
    buf[0] = version;
    buf[1..].copy_from_slice(payload);
    sha256d(&buf)[..4].try_into().expect("4 bytes")
}

impl Address {
    pub fn new(version: u8, payload: [u8; 20]) -> Self {
        Self {
            version,
            payload,
            checksum: checksum(version, &payload),
        }
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn payload(&self) -> &[u8; 20] {
        &self.payload
    }

    pub fn checksum(&self) -> [u8; 4] {
        self.checksum
    }

    pub fn to_bytes(&self) -> [u8; ADDRESS_LEN] {
        let mut out = [0u8; ADDRESS_LEN];
        out[0] = self.version;
        out[1..21].copy_from_slice(&self.payload);
        out[21..].copy_from_slice(&self.checksum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let bytes: [u8; ADDRESS_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidAddress("length"))?;
        let payload: [u8; 20] = bytes[1..21].try_into().expect("20 bytes");
        let addr = Self::new(bytes[0], payload);
        if addr.checksum != bytes[21..] {
            return Err(CryptoError::InvalidAddress("checksum"));
        }
        Ok(addr)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bs58::encode(self.to_bytes()).into_string())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl FromStr for Address {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = bs58::decode(s)
            .into_vec()
            .map_err(|_| CryptoError::InvalidAddress("base58"))?;
        Self::from_bytes(&raw)
    }
}

impl serde::Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn derive_address(pk: &SigPublicKey) -> Address {
    Address::new(TESTNET_P2PKH, hash160(pk.as_bytes()))
}

//! Concrete adversaries for the games. Each is deterministic given the
//! randomness the game hands it.

use rand_core::CryptoRngCore;

use crate::crypto::{sig_sign, Signature};
use crate::hw::Quote;

use super::games::{
    DecryptionOracle, EncryptionOracle, EufCmaAdversary, IndCcaAdversary, IndCpaAdversary, QuoteOracle,
    RemAttAdversary, RemAttView, SigningOracle,
};
use super::HarnessError;

const MSG_LEN: usize = 32;

fn random_msg(rng: &mut dyn CryptoRngCore) -> Vec<u8> {
    let mut m = vec![0u8; MSG_LEN];
    rng.fill_bytes(&mut m);
    m
}

fn coin(rng: &mut dyn CryptoRngCore) -> bool {
    rng.next_u32() & 1 == 1
}

fn flip_bit(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

fn random_bit(rng: &mut dyn CryptoRngCore, len: usize) -> usize {
    (rng.next_u64() % (len as u64 * 8)) as usize
}

/// Two random messages, then a coin flip.
#[derive(Debug, Default)]
pub struct RandomGuesser;

impl IndCpaAdversary for RandomGuesser {
    fn choose(&mut self, rng: &mut dyn CryptoRngCore, _enc: &mut EncryptionOracle<'_>) -> (Vec<u8>, Vec<u8>) {
        (random_msg(rng), random_msg(rng))
    }

    fn guess(&mut self, rng: &mut dyn CryptoRngCore, _enc: &mut EncryptionOracle<'_>, _c: &[u8]) -> bool {
        coin(rng)
    }
}

impl IndCcaAdversary for RandomGuesser {
    fn choose(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        _pk: &[u8],
        _dec: &mut DecryptionOracle<'_>,
    ) -> Result<(Vec<u8>, Vec<u8>), HarnessError> {
        Ok((random_msg(rng), random_msg(rng)))
    }

    fn guess(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        _pk: &[u8],
        _dec: &mut DecryptionOracle<'_>,
        _c: &[u8],
    ) -> Result<bool, HarnessError> {
        Ok(coin(rng))
    }
}

/// Submits `m0 = m1`, so the challenge carries no information about `b`.
#[derive(Debug, Default)]
pub struct EqualMessages;

impl IndCpaAdversary for EqualMessages {
    fn choose(&mut self, rng: &mut dyn CryptoRngCore, _enc: &mut EncryptionOracle<'_>) -> (Vec<u8>, Vec<u8>) {
        let m = random_msg(rng);
        (m.clone(), m)
    }

    fn guess(&mut self, rng: &mut dyn CryptoRngCore, _enc: &mut EncryptionOracle<'_>, _c: &[u8]) -> bool {
        coin(rng)
    }
}

/// Encrypts `m0` through the oracle first and answers `0` iff the
/// challenge equals that ciphertext. Wins every trial against a
/// deterministic cipher.
#[derive(Debug, Default)]
pub struct NonceReuse {
    seen: Vec<u8>,
}

impl IndCpaAdversary for NonceReuse {
    fn choose(&mut self, _rng: &mut dyn CryptoRngCore, enc: &mut EncryptionOracle<'_>) -> (Vec<u8>, Vec<u8>) {
        let m0 = vec![0u8; MSG_LEN];
        self.seen = enc.encrypt(&m0);
        (m0, vec![0xffu8; MSG_LEN])
    }

    fn guess(&mut self, _rng: &mut dyn CryptoRngCore, _enc: &mut EncryptionOracle<'_>, c: &[u8]) -> bool {
        c != self.seen.as_slice()
    }
}

/// Returns a pair it obtained from the signing oracle.
#[derive(Debug, Default)]
pub struct SignatureReplay;

impl EufCmaAdversary for SignatureReplay {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, _vk: &[u8], sign: &mut SigningOracle<'_>) -> (Vec<u8>, Vec<u8>) {
        let m = random_msg(rng);
        let sig = sign.sign(&m);
        (m, sig)
    }
}

/// Flips one bit of a queried message and keeps its signature.
#[derive(Debug, Default)]
pub struct SignatureBitFlip;

impl EufCmaAdversary for SignatureBitFlip {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, _vk: &[u8], sign: &mut SigningOracle<'_>) -> (Vec<u8>, Vec<u8>) {
        let mut m = random_msg(rng);
        let sig = sign.sign(&m);
        let bit = random_bit(rng, m.len());
        flip_bit(&mut m, bit);
        (m, sig)
    }
}

/// Presents a fresh message as its own signature.
#[derive(Debug, Default)]
pub struct MessageAsSignature;

impl EufCmaAdversary for MessageAsSignature {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, _vk: &[u8], _sign: &mut SigningOracle<'_>) -> (Vec<u8>, Vec<u8>) {
        let m = random_msg(rng);
        (m.clone(), m)
    }
}

/// Flips the last bit of the challenge, asks for its decryption and
/// compares against `m0` with the same bit flipped.
#[derive(Debug, Default)]
pub struct Malleation {
    m0: Vec<u8>,
}

impl IndCcaAdversary for Malleation {
    fn choose(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        _pk: &[u8],
        _dec: &mut DecryptionOracle<'_>,
    ) -> Result<(Vec<u8>, Vec<u8>), HarnessError> {
        self.m0 = random_msg(rng);
        Ok((self.m0.clone(), random_msg(rng)))
    }

    fn guess(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        _pk: &[u8],
        dec: &mut DecryptionOracle<'_>,
        c: &[u8],
    ) -> Result<bool, HarnessError> {
        let mut mauled = c.to_vec();
        let last = mauled.len() * 8 - 1;
        flip_bit(&mut mauled, last);
        match dec.decrypt(&mauled)? {
            Some(mut m) if !m.is_empty() => {
                let last = m.len() * 8 - 1;
                flip_bit(&mut m, last);
                Ok(m != self.m0)
            }
            _ => Ok(coin(rng)),
        }
    }
}

/// Asks the oracle to decrypt the challenge itself.
#[derive(Debug, Default)]
pub struct ChallengeQuerier;

impl IndCcaAdversary for ChallengeQuerier {
    fn choose(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        _pk: &[u8],
        _dec: &mut DecryptionOracle<'_>,
    ) -> Result<(Vec<u8>, Vec<u8>), HarnessError> {
        Ok((random_msg(rng), random_msg(rng)))
    }

    fn guess(
        &mut self,
        _rng: &mut dyn CryptoRngCore,
        _pk: &[u8],
        dec: &mut DecryptionOracle<'_>,
        c: &[u8],
    ) -> Result<bool, HarnessError> {
        dec.decrypt(c).map(|m| m.is_some())
    }
}

/// Returns a quote exactly as issued.
#[derive(Debug, Default)]
pub struct QuoteReplay;

impl RemAttAdversary for QuoteReplay {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, _view: &RemAttView<'_>, oracle: &mut QuoteOracle<'_>) -> Quote {
        oracle.run_quote(&random_msg(rng))
    }
}

/// Combines fields of two honest quotes: one quote's signature on a body
/// made partly from the other.
#[derive(Debug, Default)]
pub struct QuoteSplice;

impl RemAttAdversary for QuoteSplice {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, _view: &RemAttView<'_>, oracle: &mut QuoteOracle<'_>) -> Quote {
        let a = oracle.run_quote(&random_msg(rng));
        let b = oracle.run_quote(&random_msg(rng));
        let mut q = a.clone();
        match rng.next_u32() % 5 {
            0 => q.input = b.input,
            1 => q.output = b.output,
            2 => q.handle = b.handle.wrapping_add(1),
            3 => {
                q.input = b.input;
                q.output = b.output;
            }
            _ => q.sigma = b.sigma,
        }
        q
    }
}

/// Flips one bit anywhere in an honest quote's wire encoding.
#[derive(Debug, Default)]
pub struct QuoteBitFlip;

impl RemAttAdversary for QuoteBitFlip {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, _view: &RemAttView<'_>, oracle: &mut QuoteOracle<'_>) -> Quote {
        let q = oracle.run_quote(&random_msg(rng));
        let mut bytes = q.to_bytes();
        let bit = random_bit(rng, bytes.len());
        flip_bit(&mut bytes, bit);
        // length-field flips usually break parsing; mutate the signature instead
        Quote::from_bytes(&bytes).unwrap_or_else(|_| {
            let mut q = q;
            flip_bit(&mut q.sigma.0, bit % 512);
            q
        })
    }
}

/// Signs a fresh body with the quoting key when the platform leaks it;
/// otherwise falls back to a signature under a key of its own.
#[derive(Debug, Default)]
pub struct LeakedKeyForger;

impl RemAttAdversary for LeakedKeyForger {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, view: &RemAttView<'_>, oracle: &mut QuoteOracle<'_>) -> Quote {
        let honest = oracle.run_quote(b"template");
        let mut q = honest;
        q.input = random_msg(rng);
        q.output = random_msg(rng);
        let sigma: Signature = match view.leaked {
            Some(sk) => sig_sign(sk, &q.body()),
            None => {
                let own = crate::crypto::sig_keygen(rng);
                sig_sign(&own.sk, &q.body())
            }
        };
        q.sigma = sigma;
        q
    }
}

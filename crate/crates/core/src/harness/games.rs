//! The four experiments, each repeated `trials` times with fresh keys.
//!
//! Two independent generators are seeded from `seed`: one drives the
//! challenger (keys, the hidden bit, scheme randomness), the other is
//! handed to the adversary, so a failing trial replays exactly.

use std::collections::HashSet;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_core::CryptoRngCore;

use crate::crypto::backend::{PkeScheme, SignatureScheme, SymmetricScheme};
use crate::crypto::SigSecretKey;
use crate::hw::{quote_verify, CounterProgram, EnclaveHandle, Hardware, PublicParams, Quote, SECURITY_PARAM};

use super::{GameResult, HarnessError};

fn rngs(seed: u64) -> (ChaCha20Rng, ChaCha20Rng) {
    (ChaCha20Rng::seed_from_u64(seed), ChaCha20Rng::seed_from_u64(seed ^ 0xad7e_25a1))
}

fn coin(rng: &mut impl RngCore) -> bool {
    rng.next_u32() & 1 == 1
}

/// `SE.Enc(k, ·)` under the trial's key.
pub struct EncryptionOracle<'a> {
    scheme: &'a dyn SymmetricScheme,
    key: &'a [u8],
    rng: &'a mut ChaCha20Rng,
    pub queries: u64,
}

impl EncryptionOracle<'_> {
    pub fn encrypt(&mut self, msg: &[u8]) -> Vec<u8> {
        self.queries += 1;
        self.scheme.encrypt(self.rng, self.key, msg)
    }
}

pub trait IndCpaAdversary {
    /// Picks the two challenge messages; they must have equal length.
    fn choose(&mut self, rng: &mut dyn CryptoRngCore, enc: &mut EncryptionOracle<'_>) -> (Vec<u8>, Vec<u8>);
    /// Returns the guess for `b`: `false` for `m0`, `true` for `m1`.
    fn guess(&mut self, rng: &mut dyn CryptoRngCore, enc: &mut EncryptionOracle<'_>, challenge: &[u8]) -> bool;
}

/// IND-CPA: `b ← {0,1}; c* ← SE.Enc(k, m_b); b' ← A^{SE.Enc(k,·)}(c*)`.
/// A trial is won when `b' = b`.
pub fn play_ind_cpa(
    scheme: &dyn SymmetricScheme,
    adversary: &mut dyn IndCpaAdversary,
    trials: u64,
    seed: u64,
) -> Result<GameResult, HarnessError> {
    let (mut game, mut adv) = rngs(seed);
    let mut wins = 0;
    for _ in 0..trials {
        let key = scheme.keygen(&mut game);
        let b = coin(&mut game);
        let mut scheme_rng = ChaCha20Rng::seed_from_u64(game.next_u64());
        let mut enc = EncryptionOracle {
            scheme,
            key: &key,
            rng: &mut scheme_rng,
            queries: 0,
        };
        let (m0, m1) = adversary.choose(&mut adv, &mut enc);
        if m0.len() != m1.len() {
            return Err(HarnessError::LengthMismatch(m0.len(), m1.len()));
        }
        let challenge = enc.encrypt(if b { &m1 } else { &m0 });
        if adversary.guess(&mut adv, &mut enc, &challenge) == b {
            wins += 1;
        }
    }
    Ok(GameResult::new(trials, wins, 0.5))
}

/// `S.Sign(sk, ·)`, recording every queried message in `L`.
pub struct SigningOracle<'a> {
    scheme: &'a dyn SignatureScheme,
    sk: &'a [u8],
    pub queried: Vec<Vec<u8>>,
}

impl SigningOracle<'_> {
    pub fn sign(&mut self, msg: &[u8]) -> Vec<u8> {
        self.queried.push(msg.to_vec());
        self.scheme.sign(self.sk, msg)
    }
}

pub trait EufCmaAdversary {
    /// Returns a candidate forgery `(m*, σ*)`.
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, vk: &[u8], sign: &mut SigningOracle<'_>) -> (Vec<u8>, Vec<u8>);
}

/// EUF-CMA: won when `S.Verify(vk, σ*, m*) = 1` and `m* ∉ L`.
pub fn play_euf_cma(
    scheme: &dyn SignatureScheme,
    adversary: &mut dyn EufCmaAdversary,
    trials: u64,
    seed: u64,
) -> GameResult {
    let (mut game, mut adv) = rngs(seed);
    let mut wins = 0;
    for _ in 0..trials {
        let (sk, vk) = scheme.keygen(&mut game);
        let mut oracle = SigningOracle {
            scheme,
            sk: &sk,
            queried: Vec::new(),
        };
        let (m, sig) = adversary.forge(&mut adv, &vk, &mut oracle);
        if scheme.verify(&vk, &sig, &m) && !oracle.queried.contains(&m) {
            wins += 1;
        }
    }
    GameResult::new(trials, wins, 0.0)
}

/// `PKE.Dec(sk, ·)` that refuses the challenge ciphertext.
pub struct DecryptionOracle<'a> {
    scheme: &'a dyn PkeScheme,
    sk: &'a [u8],
    challenge: Option<Vec<u8>>,
    pub queries: u64,
}

impl DecryptionOracle<'_> {
    /// Returns `Ok(None)` when the ciphertext does not decrypt.
    pub fn decrypt(&mut self, ct: &[u8]) -> Result<Option<Vec<u8>>, HarnessError> {
        if self.challenge.as_deref() == Some(ct) {
            return Err(HarnessError::ChallengeQueried);
        }
        self.queries += 1;
        Ok(self.scheme.decrypt(self.sk, ct).ok())
    }
}

pub trait IndCcaAdversary {
    fn choose(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        pk: &[u8],
        dec: &mut DecryptionOracle<'_>,
    ) -> Result<(Vec<u8>, Vec<u8>), HarnessError>;
    fn guess(
        &mut self,
        rng: &mut dyn CryptoRngCore,
        pk: &[u8],
        dec: &mut DecryptionOracle<'_>,
        challenge: &[u8],
    ) -> Result<bool, HarnessError>;
}

/// IND-CCA2: `c* ← PKE.Enc(pk, m_b); b' ← A^{PKE.Dec(sk,·)}(c*)`, with the
/// oracle refusing `c*` itself.
pub fn play_ind_cca2(
    scheme: &dyn PkeScheme,
    adversary: &mut dyn IndCcaAdversary,
    trials: u64,
    seed: u64,
) -> Result<GameResult, HarnessError> {
    let (mut game, mut adv) = rngs(seed);
    let mut wins = 0;
    for _ in 0..trials {
        let (sk, pk) = scheme.keygen(&mut game);
        let b = coin(&mut game);
        let mut dec = DecryptionOracle {
            scheme,
            sk: &sk,
            challenge: None,
            queries: 0,
        };
        let (m0, m1) = adversary.choose(&mut adv, &pk, &mut dec)?;
        if m0.len() != m1.len() {
            return Err(HarnessError::LengthMismatch(m0.len(), m1.len()));
        }
        let challenge = scheme.encrypt(&mut game, &pk, if b { &m1 } else { &m0 })?;
        dec.challenge = Some(challenge.clone());
        if adversary.guess(&mut adv, &pk, &mut dec, &challenge)? == b {
            wins += 1;
        }
    }
    Ok(GameResult::new(trials, wins, 0.5))
}

/// Which platform the attestation game runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttestationBackend {
    Honest,
    /// The adversary is handed `sk_quote`.
    LeakedKey,
}

/// What the adversary sees: `pms`, plus the quoting key on a leaky platform.
pub struct RemAttView<'a> {
    pub pms: &'a PublicParams,
    pub leaked: Option<&'a SigSecretKey>,
}

/// `HW.Run&Quote` on an enclave running the reference program, recording
/// every quote issued in `Q`.
pub struct QuoteOracle<'a> {
    hw: &'a Hardware,
    hdl: EnclaveHandle,
    pub issued: HashSet<Vec<u8>>,
}

impl QuoteOracle<'_> {
    pub fn run_quote(&mut self, input: &[u8]) -> Quote {
        let q = self.hw.run_quote(&self.hdl, input).expect("reference program never fails");
        self.issued.insert(q.to_bytes());
        q
    }
}

pub trait RemAttAdversary {
    fn forge(&mut self, rng: &mut dyn CryptoRngCore, view: &RemAttView<'_>, oracle: &mut QuoteOracle<'_>) -> Quote;
}

/// RemAttUnf: won when `HW.QuoteVerify(pms, quote*) = 1` and `quote* ∉ Q`.
pub fn play_rem_att_unf(
    backend: AttestationBackend,
    adversary: &mut dyn RemAttAdversary,
    trials: u64,
    seed: u64,
) -> Result<GameResult, HarnessError> {
    let (mut game, mut adv) = rngs(seed);
    let mut wins = 0;
    for _ in 0..trials {
        let hw = Hardware::setup(SECURITY_PARAM, &mut game)?;
        hw.register(CounterProgram::image());
        let hdl = hw.load(&hw.pms().clone(), CounterProgram::NAME)?;
        let view = RemAttView {
            pms: hw.pms(),
            leaked: (backend == AttestationBackend::LeakedKey).then(|| hw.params().leak_quote_key()),
        };
        let mut oracle = QuoteOracle {
            hw: &hw,
            hdl,
            issued: HashSet::new(),
        };
        let forged = adversary.forge(&mut adv, &view, &mut oracle);
        if quote_verify(hw.pms(), &forged) && !oracle.issued.contains(&forged.to_bytes()) {
            wins += 1;
        }
    }
    Ok(GameResult::new(trials, wins, 0.0))
}

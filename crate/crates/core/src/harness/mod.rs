//! Honest oracles, statistical security games and scripted attacks.

pub mod adversaries;
pub mod broken;
mod games;
mod oracles;
mod scenarios;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::CryptoError;
use crate::enclave::EnclaveError;
use crate::runtime::RuntimeError;

pub use games::{
    play_euf_cma, play_ind_cca2, play_ind_cpa, play_rem_att_unf, AttestationBackend, DecryptionOracle,
    EncryptionOracle, EufCmaAdversary, IndCcaAdversary, IndCpaAdversary, QuoteOracle, RemAttAdversary, RemAttView,
    SigningOracle,
};
pub use oracles::{HonestOracles, OracleSets, OwnerInstruction, OwnerResponse};
pub use scenarios::{run_attack_scenario, ScenarioReport, Verdict, SCENARIOS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("challenge messages differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("adversary submitted the challenge ciphertext to the decryption oracle")]
    ChallengeQueried,
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("oracle: {0}")]
    Enclave(#[from] EnclaveError),
    #[error("scheme: {0}")]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl From<crate::hw::HwError> for HarnessError {
    fn from(e: crate::hw::HwError) -> Self {
        HarnessError::Runtime(e.into())
    }
}

impl From<crate::codec::CodecError> for HarnessError {
    fn from(e: crate::codec::CodecError) -> Self {
        HarnessError::Runtime(e.into())
    }
}

impl From<crate::chain::ChainError> for HarnessError {
    fn from(e: crate::chain::ChainError) -> Self {
        HarnessError::Runtime(e.into())
    }
}

/// Outcome of repeating one experiment. `baseline` is the win rate a
/// trivial adversary achieves: 1/2 for indistinguishability games, 0 for
/// unforgeability games.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub trials: u64,
    pub wins: u64,
    pub baseline: f64,
    pub advantage: f64,
}

impl GameResult {
    pub fn new(trials: u64, wins: u64, baseline: f64) -> Self {
        assert!(wins <= trials);
        let rate = if trials == 0 { baseline } else { wins as f64 / trials as f64 };
        Self {
            trials,
            wins,
            baseline,
            advantage: (rate - baseline).abs(),
        }
    }

    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.trials.max(1) as f64
    }

    /// Standard deviation of the win rate under the baseline.
    pub fn sigma(&self) -> f64 {
        (self.baseline * (1.0 - self.baseline) / self.trials.max(1) as f64).sqrt()
    }

    /// Whether the measured advantage is within `k` standard deviations of
    /// the baseline. With a zero baseline this means zero wins.
    pub fn within_sigmas(&self, k: f64) -> bool {
        self.advantage <= k * self.sigma()
    }
}

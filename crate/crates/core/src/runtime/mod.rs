//! Runs the owner and delegatee nodes against one emulated platform and one
//! simulated chain.

mod node;
mod store;
mod transport;

use std::path::PathBuf;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::chain::{ChainError, ChainHandle, ChainState, Rejection, DEFAULT_CONFIRMATION_DEPTH};
use crate::codec::CodecError;
use crate::crypto::{Address, CryptoError, SymCiphertext};
use crate::enclave::delegatee::{self, DelegateeInitOutput, DelegateeProgram, ProvisionMessage};
use crate::enclave::owner::OwnerProgram;
use crate::enclave::{EnclaveError, Transaction, TxId};
use crate::hw::{Hardware, HwError, Measurement, SECURITY_PARAM};

pub use node::{pair, CrashPoint, DelegateeNode, OwnerNode, OwnerSession};
pub use store::{
    delegation_frames, parse_log, SealStore, StoreContents, StoreError, OUTBOX_MAGIC, SESSION_MAGIC,
};
pub use transport::{
    check_flow, delegate_decode, delegate_encode, parse_transcript, setup2_decode, setup2_encode, Direction,
    Envelope, FlowError, FlowSummary, Interceptor, Link, LinkFaults, LinkStats, Phase, Transcript,
};

/// How many times a message is re-sent over a faulty link before giving up.
pub const MAX_ATTEMPTS: usize = 16;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("enclave refused: {0}")]
    Enclave(EnclaveError),
    #[error("node crashed at {0}")]
    Crashed(String),
    #[error("platform: {0}")]
    Hw(HwError),
    #[error("chain: {0}")]
    Chain(#[from] ChainError),
    #[error("transaction rejected by chain: {0}")]
    Rejected(Rejection),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("malformed message: {0}")]
    Codec(#[from] CodecError),
    #[error("{0} message not delivered after {MAX_ATTEMPTS} attempts")]
    NotDelivered(Phase),
    #[error("no delegation session established")]
    NoSession,
    #[error("owner has no deposit address yet")]
    NoAddress,
    #[error("owner enclave is down")]
    OwnerDown,
    #[error("delegatee holds no transaction with sequence number {0}")]
    UnknownDelegation(u64),
}

impl RuntimeError {
    pub fn enclave_error(&self) -> Option<&EnclaveError> {
        match self {
            RuntimeError::Enclave(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, RuntimeError::Crashed(_))
    }
}

impl From<HwError> for RuntimeError {
    fn from(e: HwError) -> Self {
        match e {
            HwError::Program(e) => RuntimeError::Enclave(e),
            HwError::EnclaveCrashed { point, .. } => RuntimeError::Crashed(point.to_string()),
            other => RuntimeError::Hw(other),
        }
    }
}

impl From<CryptoError> for RuntimeError {
    fn from(e: CryptoError) -> Self {
        RuntimeError::Codec(CodecError::Invalid(crypto_what(&e)))
    }
}

fn crypto_what(e: &CryptoError) -> &'static str {
    match e {
        CryptoError::IntegrityFailure => "ciphertext",
        _ => "key or ciphertext encoding",
    }
}

/// One platform with both programs registered, plus a chain whose receipt
/// key is pinned into the owner program.
#[derive(Debug, Clone)]
pub struct Platform {
    pub hw: Arc<Hardware>,
    pub chain: ChainHandle,
    pub owner_tag: Measurement,
}

impl Platform {
    pub fn new(rng: &mut ChaCha20Rng, confirmation_depth: u64) -> Result<Self, RuntimeError> {
        let hw = Arc::new(Hardware::setup(SECURITY_PARAM, rng)?);
        let chain = ChainHandle::new(ChainState::new(confirmation_depth, rng)?);
        let owner_tag = hw.register(OwnerProgram::image(chain.with(|c| c.receipt_key())));
        hw.register(DelegateeProgram::image(owner_tag));
        Ok(Self { hw, chain, owner_tag })
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub confirmation_depth: u64,
    pub link_faults: LinkFaults,
    /// File-backed seal store; in memory when `None`.
    pub store_path: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            confirmation_depth: DEFAULT_CONFIRMATION_DEPTH,
            link_faults: LinkFaults::default(),
            store_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepositOutcome {
    pub addr: Address,
    pub enclave_balance: u64,
    pub chain_balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelegationOutcome {
    pub seq: u64,
    pub amount: u64,
    pub tx: Transaction,
    pub ct_tx: SymCiphertext,
    /// Chain operations performed while the delegation ran. Always zero.
    pub chain_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryOutcome {
    pub balance: u64,
    pub resent: Vec<u64>,
}

/// An owner, a delegatee, the link between them and the chain, driven
/// step by step from one thread.
#[derive(Debug)]
pub struct Simulation {
    config: SimConfig,
    platform: Platform,
    pub owner: OwnerNode,
    pub delegatee: DelegateeNode,
    pub link: Link,
    pub transcript: Transcript,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, RuntimeError> {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let platform = Platform::new(&mut rng, config.confirmation_depth)?;
        let store = match &config.store_path {
            Some(p) => SealStore::open(p)?,
            None => SealStore::memory(),
        };
        let owner = OwnerNode::new(platform.hw.clone(), store)?;
        let delegatee = DelegateeNode::new(platform.hw.clone(), delegatee::NAME)?;
        let link = Link::new(config.link_faults, config.seed ^ 0x6c69_6e6b);
        Ok(Self {
            config,
            platform,
            owner,
            delegatee,
            link,
            transcript: Transcript::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn hw(&self) -> &Arc<Hardware> {
        &self.platform.hw
    }

    pub fn chain(&self) -> &ChainHandle {
        &self.platform.chain
    }

    /// Sends `env` until the receiver's handler yields a value. Envelopes
    /// of other phases, duplicates and undecodable bytes are discarded; a
    /// handler error on an intact envelope is final.
    fn exchange<T>(
        &mut self,
        dir: Direction,
        env: Envelope,
        mut handle: impl FnMut(&mut OwnerNode, &mut DelegateeNode, Envelope) -> Result<Option<T>, RuntimeError>,
    ) -> Result<T, RuntimeError> {
        let phase = env.phase;
        let attempts = if self.link.faults().is_clean() { 1 } else { MAX_ATTEMPTS };
        for _ in 0..attempts {
            self.transcript.record(&env);
            self.link.send(dir, env.clone());
            while let Some(bytes) = self.link.recv(dir) {
                let Ok(got) = Envelope::decode(&bytes) else {
                    continue;
                };
                if got.phase != phase || got.session != env.session {
                    continue;
                }
                let tampered = got != env;
                match handle(&mut self.owner, &mut self.delegatee, got) {
                    Ok(Some(v)) => return Ok(v),
                    Ok(None) => {}
                    // a bit flip the receiver caught; wait for a retry
                    Err(_) if tampered && !self.link.faults().is_clean() => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Err(RuntimeError::NotDelivered(phase))
    }

    /// Runs the three setup messages. Afterwards the delegatee holds `r`.
    pub fn run_setup(&mut self) -> Result<(), RuntimeError> {
        let init = self.delegatee.init();
        let sid = init.sid;
        let env = Envelope::new(Phase::Setup1, sid, init.encode());
        let (quote, pk_o) = self.exchange(Direction::DelegateeToOwner, env, |owner, _, e| {
            let init = DelegateeInitOutput::decode(&e.body)?;
            owner.init_setup(&init).map(Some)
        })?;
        let env = Envelope::new(Phase::Setup2, sid, setup2_encode(&quote, &pk_o));
        let msg = self.exchange(Direction::OwnerToDelegatee, env, |_, d, e| {
            let (quote, pk_o) = setup2_decode(&e.body)?;
            d.provision(&quote, pk_o).map(Some)
        })?;
        let env = Envelope::new(Phase::Setup3, sid, msg.encode());
        self.exchange(Direction::DelegateeToOwner, env, |owner, _, e| {
            let msg = ProvisionMessage::decode(&e.body)?;
            owner.complete_setup(&msg).map(Some)
        })?;
        self.owner.ensure_address()?;
        Ok(())
    }

    /// Pays `amount` on chain to the owner's address, waits for it to
    /// confirm, and hands the enclave the chain's receipt.
    pub fn run_deposit(&mut self, amount: u64) -> Result<DepositOutcome, RuntimeError> {
        let addr = self.owner.ensure_address()?;
        let chain = self.platform.chain.clone();
        chain.deposit(addr, amount)?;
        chain.advance_blocks(chain.confirmation_depth())?;
        let receipt = chain.deposit_receipt(&addr);
        let enclave_balance = self.owner.notify_deposit(receipt)?;
        Ok(DepositOutcome {
            addr,
            enclave_balance,
            chain_balance: chain.balance_of(&addr),
        })
    }

    /// Delegates `amount` to the delegatee's payout address and delivers
    /// `ct_tx`. Touches only the two enclaves and the seal store.
    pub fn run_delegation(&mut self, amount: u64) -> Result<DelegationOutcome, RuntimeError> {
        let before = self.platform.chain.calls();
        let recipient = self.delegatee.payout();
        let (seq, ct_tx) = self.owner.delegate(amount, recipient)?;
        let tx = self.deliver(seq, &ct_tx)?;
        Ok(DelegationOutcome {
            seq,
            amount,
            tx,
            ct_tx,
            chain_calls: self.platform.chain.calls() - before,
        })
    }

    fn deliver(&mut self, seq: u64, ct_tx: &SymCiphertext) -> Result<Transaction, RuntimeError> {
        let sid = self.delegatee.sid();
        let env = Envelope::new(Phase::Delegate, sid, delegate_encode(seq, ct_tx));
        self.exchange(Direction::OwnerToDelegatee, env, |_, d, e| {
            let (got_seq, ct) = delegate_decode(&e.body)?;
            let tx = d.receive(got_seq, &ct)?;
            Ok((got_seq == seq).then_some(tx))
        })
    }

    /// The delegatee broadcasts the transaction it holds for `seq`.
    pub fn run_spend(&mut self, seq: u64) -> Result<TxId, RuntimeError> {
        let tx = *self
            .delegatee
            .received()
            .get(&seq)
            .ok_or(RuntimeError::UnknownDelegation(seq))?;
        let env = Envelope::new(Phase::Spend, self.delegatee.sid(), tx.to_bytes().to_vec());
        self.transcript.record(&env);
        self.platform.chain.submit(tx).map_err(RuntimeError::Rejected)
    }

    /// Mines enough blocks for everything pending to reach confirmation depth.
    pub fn confirm(&mut self) -> Result<u64, RuntimeError> {
        let chain = &self.platform.chain;
        Ok(chain.advance_blocks(chain.confirmation_depth())?)
    }

    pub fn crash_owner(&mut self) {
        self.owner.crash();
    }

    /// Restarts the owner from its store and re-sends every committed
    /// `ct_tx`. The delegatee ignores sequence numbers it already holds.
    pub fn recover_owner(&mut self) -> Result<RecoveryOutcome, RuntimeError> {
        let outbox = self.owner.recover()?;
        let mut resent = Vec::new();
        for (seq, ct_tx) in outbox {
            self.deliver(seq, &ct_tx)?;
            resent.push(seq);
        }
        let balance = self.owner.balance()?;
        Ok(RecoveryOutcome { balance, resent })
    }
}

#[cfg(test)]
mod tests;

//! Host-side nodes wrapping the two enclaves.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::DepositReceipt;
use crate::crypto::{derive_address, Address, PkePublicKey, SymCiphertext};
use crate::enclave::delegatee::{DelegateeCommand, DelegateeInitOutput, ProvisionMessage};
use crate::enclave::owner::{
    self, checkpoints, decode_u64, AddressOutput, DelegationOutput, DepositOutput, InitSetupOutput, OwnerCommand,
    RestoredSession,
};
use crate::enclave::{SessionId, Transaction};
use crate::hw::{EnclaveHandle, Hardware, HwError, Quote};
use crate::crypto::SigPublicKey;

use super::store::SealStore;
use super::RuntimeError;

/// Where an owner node can be made to crash during a delegation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CrashPoint {
    AfterStateUpdate,
    AfterTransactionGeneration,
    AfterStartDelegation,
    AfterStateSeal,
    /// Enclave finished; host dies before writing the store.
    BeforePersist,
    /// Host dies half-way through the store append.
    TornWrite,
    /// Store written and synced; host dies before sending `ct_tx`.
    AfterPersist,
}

impl CrashPoint {
    pub const ALL: [CrashPoint; 7] = [
        CrashPoint::AfterStateUpdate,
        CrashPoint::AfterTransactionGeneration,
        CrashPoint::AfterStartDelegation,
        CrashPoint::AfterStateSeal,
        CrashPoint::BeforePersist,
        CrashPoint::TornWrite,
        CrashPoint::AfterPersist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CrashPoint::AfterStateUpdate => checkpoints::AFTER_STATE_UPDATE,
            CrashPoint::AfterTransactionGeneration => checkpoints::AFTER_TRANSACTION_GENERATION,
            CrashPoint::AfterStartDelegation => checkpoints::AFTER_START_DELEGATION,
            CrashPoint::AfterStateSeal => checkpoints::AFTER_STATE_SEAL,
            CrashPoint::BeforePersist => "host/before-persist",
            CrashPoint::TornWrite => "host/torn-write",
            CrashPoint::AfterPersist => "host/after-persist",
        }
    }

    fn enclave_checkpoint(self) -> Option<&'static str> {
        let name = self.name();
        checkpoints::ALL.contains(&name).then_some(name)
    }

    /// Whether a delegation interrupted here is durable after recovery.
    pub fn commits(self) -> bool {
        self == CrashPoint::AfterPersist
    }
}

impl fmt::Display for CrashPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CrashPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown crash point {s:?}"))
    }
}

impl From<CrashPoint> for String {
    fn from(p: CrashPoint) -> Self {
        p.name().to_string()
    }
}

impl TryFrom<String> for CrashPoint {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OwnerSession {
    pub sid: SessionId,
    pub vk_sign: SigPublicKey,
}

/// Owner host: one live enclave plus the seal store. All chain interaction
/// happens outside this type.
#[derive(Debug)]
pub struct OwnerNode {
    hw: Arc<Hardware>,
    hdl: Option<EnclaveHandle>,
    store: SealStore,
    session: Option<OwnerSession>,
    setup_quote: Option<(Quote, PkePublicKey)>,
    setup_complete: bool,
    addr: Option<Address>,
    armed: Option<CrashPoint>,
}

impl OwnerNode {
    pub fn new(hw: Arc<Hardware>, store: SealStore) -> Result<Self, RuntimeError> {
        let hdl = hw.load(&hw.pms().clone(), owner::NAME)?;
        Ok(Self {
            hw,
            hdl: Some(hdl),
            store,
            session: None,
            setup_quote: None,
            setup_complete: false,
            addr: None,
            armed: None,
        })
    }

    pub fn handle(&self) -> Option<EnclaveHandle> {
        self.hdl
    }

    pub fn session(&self) -> Option<OwnerSession> {
        self.session
    }

    pub fn addr(&self) -> Option<Address> {
        self.addr
    }

    pub fn store(&self) -> &SealStore {
        &self.store
    }

    pub fn is_up(&self) -> bool {
        self.hdl.is_some_and(|h| self.hw.is_live(&h))
    }

    fn live(&self) -> Result<EnclaveHandle, RuntimeError> {
        self.hdl.ok_or(RuntimeError::OwnerDown)
    }

    fn crashed(&mut self, e: HwError) -> RuntimeError {
        if matches!(e, HwError::EnclaveCrashed { .. }) {
            self.hdl = None;
        }
        e.into()
    }

    fn run(&mut self, cmd: &OwnerCommand) -> Result<Vec<u8>, RuntimeError> {
        let hdl = self.live()?;
        self.hw.run(&hdl, &cmd.encode()).map_err(|e| self.crashed(e))
    }

    /// Answers the delegatee's first message with a quote over "init
    /// setup". Repeats of the same message get the same quote.
    pub fn init_setup(&mut self, init: &DelegateeInitOutput) -> Result<(Quote, PkePublicKey), RuntimeError> {
        if let (Some(s), Some(q)) = (self.session, &self.setup_quote) {
            if s.sid == init.sid && s.vk_sign == init.vk_sign {
                return Ok(q.clone());
            }
        }
        let hdl = self.live()?;
        let cmd = OwnerCommand::InitSetup {
            sid: init.sid,
            vk_sign: init.vk_sign,
        };
        let quote = self.hw.run_quote(&hdl, &cmd.encode()).map_err(|e| self.crashed(e))?;
        let pk_o = InitSetupOutput::decode(&quote.output)?.pk_o;
        self.session = Some(OwnerSession {
            sid: init.sid,
            vk_sign: init.vk_sign,
        });
        self.setup_quote = Some((quote.clone(), pk_o));
        Ok((quote, pk_o))
    }

    pub fn complete_setup(&mut self, msg: &ProvisionMessage) -> Result<(), RuntimeError> {
        if self.setup_complete {
            return Ok(());
        }
        self.run(&OwnerCommand::CompleteSetup {
            sid: msg.sid,
            ct_r: msg.ct_r.clone(),
            sigma_r: msg.sigma_r,
        })?;
        self.setup_complete = true;
        self.persist_session()
    }

    fn persist_session(&mut self) -> Result<(), RuntimeError> {
        let blob = SymCiphertext::from_bytes(&self.run(&OwnerCommand::SealSession)?)?;
        self.store.append_session(&blob)?;
        Ok(())
    }

    /// Loads `c_init` and generates the deposit address, unless the session
    /// already has one.
    pub fn ensure_address(&mut self) -> Result<Address, RuntimeError> {
        if let Some(a) = self.addr {
            return Ok(a);
        }
        let session = self.session.ok_or(RuntimeError::NoSession)?;
        let latest = self.store.load()?.latest;
        self.run(&OwnerCommand::StateRetrieval {
            sid: session.sid,
            record: latest,
        })?;
        let out = AddressOutput::decode(&self.run(&OwnerCommand::AddressGeneration)?)?;
        self.addr = Some(out.addr);
        self.persist_session()?;
        Ok(out.addr)
    }

    pub fn notify_deposit(&mut self, receipt: DepositReceipt) -> Result<u64, RuntimeError> {
        let out = DepositOutput::decode(&self.run(&OwnerCommand::DepositNotify { receipt })?)?;
        self.store.append_record(&out.record)?;
        Ok(out.balance)
    }

    /// Makes the next delegation crash at `point`.
    pub fn arm(&mut self, point: CrashPoint) {
        self.armed = Some(point);
    }

    pub fn disarm(&mut self) {
        self.armed = None;
    }

    /// Runs the atomic delegation and persists its result. Returns the
    /// sequence number and `ct_tx` only once both are durable.
    pub fn delegate(&mut self, amount: u64, recipient: Address) -> Result<(u64, SymCiphertext), RuntimeError> {
        let addr = self.addr.ok_or(RuntimeError::NoAddress)?;
        let hdl = self.live()?;
        let armed = self.armed.take();
        if let Some(point) = armed.and_then(CrashPoint::enclave_checkpoint) {
            self.hw.arm_crash(&hdl, point)?;
        }
        let cmd = OwnerCommand::DelegateAtomic {
            addr,
            amount,
            recipient,
        };
        let result = self.hw.run(&hdl, &cmd.encode());
        if armed.is_some_and(|p| p.enclave_checkpoint().is_some()) && self.hdl.is_some() {
            // the checkpoint was not reached, e.g. the command was refused
            let _ = self.hw.disarm_crash(&hdl);
        }
        let out = DelegationOutput::decode(&result.map_err(|e| self.crashed(e))?)?;
        match armed {
            Some(p @ CrashPoint::BeforePersist) => return Err(self.host_crash(p)),
            Some(p @ CrashPoint::TornWrite) => {
                self.store.append_torn(&out.record, &out.ct_tx)?;
                return Err(self.host_crash(p));
            }
            _ => {}
        }
        self.store.append_delegation(&out.record, &out.ct_tx)?;
        if let Some(p @ CrashPoint::AfterPersist) = armed {
            return Err(self.host_crash(p));
        }
        Ok((out.record.seq, out.ct_tx))
    }

    fn host_crash(&mut self, point: CrashPoint) -> RuntimeError {
        self.crash();
        RuntimeError::Crashed(point.name().to_string())
    }

    pub fn balance(&mut self) -> Result<u64, RuntimeError> {
        Ok(decode_u64(&self.run(&OwnerCommand::Balance)?)?)
    }

    /// Kills the enclave and forgets all host memory except the store.
    pub fn crash(&mut self) {
        if let Some(h) = self.hdl.take() {
            self.hw.destroy(&h);
        }
        self.session = None;
        self.setup_quote = None;
        self.setup_complete = false;
        self.addr = None;
        self.armed = None;
    }

    /// Loads a fresh enclave and reloads session keys and the newest sealed
    /// balance from the store. Returns the committed outbox for resending.
    pub fn recover(&mut self) -> Result<Vec<(u64, SymCiphertext)>, RuntimeError> {
        self.crash();
        let contents = self.store.recover()?;
        let hdl = self.hw.load(&self.hw.pms().clone(), owner::NAME)?;
        self.hdl = Some(hdl);
        let Some(blob) = contents.session else {
            return Ok(Vec::new());
        };
        let restored = RestoredSession::decode(&self.run(&OwnerCommand::RestoreSession { blob })?)?;
        self.session = Some(OwnerSession {
            sid: restored.sid,
            vk_sign: restored.vk_sign,
        });
        self.setup_complete = true;
        self.addr = restored.addr;
        if restored.addr.is_some() {
            self.run(&OwnerCommand::StateRetrieval {
                sid: restored.sid,
                record: contents.latest,
            })?;
        }
        Ok(contents.outbox.into_iter().collect())
    }
}

/// Delegatee host: one enclave, the transactions it has received, and the
/// payout address they pay to.
#[derive(Debug)]
pub struct DelegateeNode {
    hw: Arc<Hardware>,
    hdl: EnclaveHandle,
    init: DelegateeInitOutput,
    provisioned: Option<(Quote, ProvisionMessage)>,
    received: BTreeMap<u64, Transaction>,
}

impl DelegateeNode {
    pub fn new(hw: Arc<Hardware>, program: &str) -> Result<Self, RuntimeError> {
        let hdl = hw.load(&hw.pms().clone(), program)?;
        let init = DelegateeInitOutput::decode(&hw.run(&hdl, &DelegateeCommand::InitSetup.encode())?)?;
        Ok(Self {
            hw,
            hdl,
            init,
            provisioned: None,
            received: BTreeMap::new(),
        })
    }

    pub fn handle(&self) -> EnclaveHandle {
        self.hdl
    }

    pub fn init(&self) -> DelegateeInitOutput {
        self.init
    }

    pub fn sid(&self) -> SessionId {
        self.init.sid
    }

    /// Where delegated coins are paid.
    pub fn payout(&self) -> Address {
        derive_address(&self.init.vk_sign)
    }

    pub fn provision(&mut self, quote: &Quote, pk_o: PkePublicKey) -> Result<ProvisionMessage, RuntimeError> {
        if let Some((q, msg)) = &self.provisioned {
            if q == quote {
                return Ok(msg.clone());
            }
        }
        let cmd = DelegateeCommand::Provision {
            quote: quote.clone(),
            pk_o,
            pms: self.hw.pms().clone(),
        };
        let msg = ProvisionMessage::decode(&self.hw.run(&self.hdl, &cmd.encode())?)?;
        self.provisioned = Some((quote.clone(), msg.clone()));
        Ok(msg)
    }

    /// Decrypts a delegated transaction. A repeated sequence number returns
    /// the transaction already held without touching the enclave.
    pub fn receive(&mut self, seq: u64, ct_tx: &SymCiphertext) -> Result<Transaction, RuntimeError> {
        if let Some(tx) = self.received.get(&seq) {
            return Ok(*tx);
        }
        let cmd = DelegateeCommand::CompleteDelegation { ct_tx: ct_tx.clone() };
        let tx = Transaction::from_bytes(&self.hw.run(&self.hdl, &cmd.encode())?)?;
        self.received.insert(seq, tx);
        Ok(tx)
    }

    pub fn received(&self) -> &BTreeMap<u64, Transaction> {
        &self.received
    }

    pub fn received_total(&self) -> u64 {
        self.received.values().map(Transaction::amount).sum()
    }
}

/// Runs the three setup messages directly between two nodes on the same
/// host and creates the owner's address.
pub fn pair(owner: &mut OwnerNode, delegatee: &mut DelegateeNode) -> Result<Address, RuntimeError> {
    let (quote, pk_o) = owner.init_setup(&delegatee.init())?;
    let msg = delegatee.provision(&quote, pk_o)?;
    owner.complete_setup(&msg)?;
    owner.ensure_address()
}

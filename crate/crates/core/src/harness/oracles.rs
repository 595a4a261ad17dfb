//! Honest owner and delegatee oracles over real enclaves. Adversaries reach
//! the hardware only through these instructions.

use std::collections::HashMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::chain::DEFAULT_CONFIRMATION_DEPTH;
use crate::crypto::{derive_address, sig_keygen, Address, SigPublicKey, Signature};
use crate::enclave::delegatee::{self, DelegateeCommand, DelegateeInitOutput, ProvisionMessage};
use crate::enclave::owner::{self, AddressOutput, InitSetupOutput, OwnerCommand};
use crate::enclave::{EnclaveError, SessionId, Transaction, SESSION_ID_LEN};
use crate::hw::{EnclaveHandle, Quote};
use crate::runtime::Platform;

use super::HarnessError;

/// Funds every address the owner oracle creates, in µBTC.
const ORACLE_FUNDING: u64 = 1_000_000;

/// Memo tables. Each only grows; a hit returns the stored response.
#[derive(Debug, Default, Clone)]
pub struct OracleSets {
    /// `(addr, σ_Tx)`
    pub r1: HashMap<Address, Signature>,
    /// `(vk_sign, quote)`
    pub r2: HashMap<SigPublicKey, Quote>,
    /// `(quote, ct_r)`, keyed by the quote's wire bytes.
    pub c: HashMap<Vec<u8>, ProvisionMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OwnerInstruction {
    AddressGeneration,
    SignatureCreation(Address),
    QuoteGeneration(SigPublicKey),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OwnerResponse {
    Address(Address),
    Signature(Signature),
    Quote(Quote),
}

/// Both honest oracles on one platform. Every address comes from its own
/// funded owner enclave; every delegatee session from its own delegatee
/// enclave.
#[derive(Debug)]
pub struct HonestOracles {
    platform: Platform,
    rng: ChaCha20Rng,
    sets: OracleSets,
    owners: HashMap<Address, EnclaveHandle>,
    delegatees: HashMap<SessionId, (EnclaveHandle, SigPublicKey)>,
    sink: Address,
    backend_calls: u64,
}

impl HonestOracles {
    pub fn new(seed: u64) -> Result<Self, HarnessError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let platform = Platform::new(&mut rng, DEFAULT_CONFIRMATION_DEPTH)?;
        let sink = derive_address(&sig_keygen(&mut rng).vk);
        Ok(Self {
            platform,
            rng,
            sets: OracleSets::default(),
            owners: HashMap::new(),
            delegatees: HashMap::new(),
            sink,
            backend_calls: 0,
        })
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn sets(&self) -> &OracleSets {
        &self.sets
    }

    /// Queries that missed the memo tables and reached an enclave.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls
    }

    pub fn owner(&mut self, instruction: OwnerInstruction) -> Result<OwnerResponse, HarnessError> {
        Ok(match instruction {
            OwnerInstruction::AddressGeneration => OwnerResponse::Address(self.generate_address()?),
            OwnerInstruction::SignatureCreation(addr) => OwnerResponse::Signature(self.sign(addr)?),
            OwnerInstruction::QuoteGeneration(vk) => OwnerResponse::Quote(self.quote(vk)?),
        })
    }

    fn fresh_sid(&mut self) -> SessionId {
        let mut sid = [0u8; SESSION_ID_LEN];
        self.rng.fill_bytes(&mut sid);
        SessionId(sid)
    }

    fn run_owner(&self, hdl: &EnclaveHandle, cmd: OwnerCommand) -> Result<Vec<u8>, HarnessError> {
        Ok(self.platform.hw.run(hdl, &cmd.encode())?)
    }

    fn load_owner(&self) -> Result<EnclaveHandle, HarnessError> {
        let hw = &self.platform.hw;
        Ok(hw.load(&hw.pms().clone(), owner::NAME)?)
    }

    /// New owner enclave with an address funded on chain.
    pub fn generate_address(&mut self) -> Result<Address, HarnessError> {
        self.backend_calls += 1;
        let hdl = self.load_owner()?;
        let sid = self.fresh_sid();
        let vk_sign = sig_keygen(&mut self.rng).vk;
        self.run_owner(&hdl, OwnerCommand::InitSetup { sid, vk_sign })?;
        let addr = AddressOutput::decode(&self.run_owner(&hdl, OwnerCommand::AddressGeneration)?)?.addr;
        let chain = &self.platform.chain;
        chain.deposit(addr, ORACLE_FUNDING)?;
        chain.advance_blocks(chain.confirmation_depth())?;
        let receipt = chain.deposit_receipt(&addr);
        self.run_owner(&hdl, OwnerCommand::DepositNotify { receipt })?;
        self.owners.insert(addr, hdl);
        Ok(addr)
    }

    /// `σ_Tx` over a unit transfer from `addr`, created once per address.
    pub fn sign(&mut self, addr: Address) -> Result<Signature, HarnessError> {
        if let Some(sig) = self.sets.r1.get(&addr) {
            return Ok(*sig);
        }
        let hdl = *self.owners.get(&addr).ok_or(EnclaveError::AddressMismatch)?;
        self.backend_calls += 1;
        self.run_owner(&hdl, OwnerCommand::StateUpdate { addr, amount: 1 })?;
        let tx = self.run_owner(
            &hdl,
            OwnerCommand::TransactionGeneration {
                addr,
                amount: 1,
                recipient: self.sink,
            },
        )?;
        self.run_owner(&hdl, OwnerCommand::StateSeal { addr })?;
        let sig = Transaction::from_bytes(&tx)?.sigma;
        self.sets.r1.insert(addr, sig);
        Ok(sig)
    }

    /// Owner quote over `init setup` for `vk_sign`, created once per key.
    pub fn quote(&mut self, vk_sign: SigPublicKey) -> Result<Quote, HarnessError> {
        if let Some(q) = self.sets.r2.get(&vk_sign) {
            return Ok(q.clone());
        }
        self.backend_calls += 1;
        // the session id is the delegatee's; reuse it when the key came from one
        let sid = self
            .delegatees
            .iter()
            .find_map(|(sid, (_, vk))| (*vk == vk_sign).then_some(*sid))
            .unwrap_or_else(|| self.fresh_sid());
        let hdl = self.load_owner()?;
        let cmd = OwnerCommand::InitSetup { sid, vk_sign };
        let quote = self.platform.hw.run_quote(&hdl, &cmd.encode())?;
        self.platform.hw.destroy(&hdl);
        self.sets.r2.insert(vk_sign, quote.clone());
        Ok(quote)
    }

    /// Starts a delegatee session and returns its public part.
    pub fn delegatee_begin(&mut self) -> Result<DelegateeInitOutput, HarnessError> {
        let hw = &self.platform.hw;
        let hdl = hw.load(&hw.pms().clone(), delegatee::NAME)?;
        let init = DelegateeInitOutput::decode(&hw.run(&hdl, &DelegateeCommand::InitSetup.encode())?)?;
        self.delegatees.insert(init.sid, (hdl, init.vk_sign));
        Ok(init)
    }

    /// Key provisioning: the delegatee whose session the quote names checks
    /// it and returns `(sid, ct_r, σ_r)`. Created once per quote.
    pub fn delegatee_provision(&mut self, quote: &Quote) -> Result<ProvisionMessage, HarnessError> {
        let key = quote.to_bytes();
        if let Some(msg) = self.sets.c.get(&key) {
            return Ok(msg.clone());
        }
        let init = InitSetupOutput::decode(&quote.output).map_err(|_| EnclaveError::BadQuote)?;
        let (hdl, _) = *self.delegatees.get(&init.sid).ok_or(EnclaveError::UnknownSession)?;
        self.backend_calls += 1;
        let hw = &self.platform.hw;
        let cmd = DelegateeCommand::Provision {
            quote: quote.clone(),
            pk_o: init.pk_o,
            pms: hw.pms().clone(),
        };
        let msg = ProvisionMessage::decode(&hw.run(&hdl, &cmd.encode())?)?;
        self.sets.c.insert(key, msg.clone());
        Ok(msg)
    }
}

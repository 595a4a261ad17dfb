//! Owner enclave program: setup with the delegatee, deposit address,
//! balance bookkeeping and atomic delegation.
//!
//! Every command is a single opcode byte followed by length-prefixed
//! arguments. Secrets (`sk_O`, `key_seal`, `r`, `sk_Tx`) never leave the
//! enclave except encrypted under the platform sealing key.

use rand_chacha::rand_core::RngCore;

use crate::chain::DepositReceipt;
use crate::codec::{split_opcode, CodecError, Decoder, Encoder};
use crate::crypto::{
    derive_address, pke_dec, pke_keygen, se_dec, se_enc, sha256, sig_keygen, sig_verify, Address,
    PkeCiphertext, PkeKeypair, PkePublicKey, PkeSecretKey, SigKeypair, SigPublicKey, SigSecretKey,
    Signature, SymCiphertext, SymKey,
};
use crate::hw::{EnclaveContext, EnclaveProgram, ProgramImage};

use super::{
    provision_signing_bytes, BalanceSnapshot, EnclaveError, SealedRecord, SessionId, Transaction,
    TxMetadata,
};

pub const NAME: &str = "delegacoin/owner";
const IDENTIFIER: &[u8] = b"delegacoin/owner/v1";

/// Crash points inside the atomic delegation, in execution order.
pub mod checkpoints {
    pub const AFTER_STATE_UPDATE: &str = "owner/after-state-update";
    pub const AFTER_TRANSACTION_GENERATION: &str = "owner/after-transaction-generation";
    pub const AFTER_START_DELEGATION: &str = "owner/after-start-delegation";
    pub const AFTER_STATE_SEAL: &str = "owner/after-state-seal";

    pub const ALL: [&str; 4] = [
        AFTER_STATE_UPDATE,
        AFTER_TRANSACTION_GENERATION,
        AFTER_START_DELEGATION,
        AFTER_STATE_SEAL,
    ];
}

mod op {
    pub const INIT_SETUP: u8 = 0x01;
    pub const COMPLETE_SETUP: u8 = 0x02;
    pub const STATE_RETRIEVAL: u8 = 0x03;
    pub const ADDRESS_GENERATION: u8 = 0x04;
    pub const STATE_UPDATE: u8 = 0x05;
    pub const TRANSACTION_GENERATION: u8 = 0x06;
    pub const START_DELEGATION: u8 = 0x07;
    pub const STATE_SEAL: u8 = 0x08;
    pub const DELEGATE_ATOMIC: u8 = 0x09;
    pub const DEPOSIT_NOTIFY: u8 = 0x0a;
    pub const SEAL_SESSION: u8 = 0x0b;
    pub const RESTORE_SESSION: u8 = 0x0c;
    pub const BALANCE: u8 = 0x0d;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OwnerCommand {
    InitSetup { sid: SessionId, vk_sign: SigPublicKey },
    CompleteSetup { sid: SessionId, ct_r: PkeCiphertext, sigma_r: Signature },
    StateRetrieval { sid: SessionId, record: Option<SealedRecord> },
    AddressGeneration,
    StateUpdate { addr: Address, amount: u64 },
    TransactionGeneration { addr: Address, amount: u64, recipient: Address },
    StartDelegation { addr: Address },
    StateSeal { addr: Address },
    DelegateAtomic { addr: Address, amount: u64, recipient: Address },
    DepositNotify { receipt: DepositReceipt },
    SealSession,
    RestoreSession { blob: SymCiphertext },
    Balance,
}

fn addr_field(d: &mut Decoder<'_>) -> Result<Address, CodecError> {
    Address::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("address"))
}

fn sym_ct_field(field: &[u8]) -> Result<SymCiphertext, CodecError> {
    SymCiphertext::from_bytes(field).map_err(|_| CodecError::Invalid("ciphertext"))
}

impl OwnerCommand {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Self::InitSetup { sid, vk_sign } => Encoder::with_opcode(op::INIT_SETUP)
                .put(&sid.0)
                .put(vk_sign.as_bytes())
                .finish(),
            Self::CompleteSetup { sid, ct_r, sigma_r } => Encoder::with_opcode(op::COMPLETE_SETUP)
                .put(&sid.0)
                .put(&ct_r.to_bytes())
                .put(sigma_r.as_bytes())
                .finish(),
            Self::StateRetrieval { sid, record } => Encoder::with_opcode(op::STATE_RETRIEVAL)
                .put(&sid.0)
                .put_opt(record.as_ref().map(SealedRecord::to_frame).as_deref())
                .finish(),
            Self::AddressGeneration => vec![op::ADDRESS_GENERATION],
            Self::StateUpdate { addr, amount } => Encoder::with_opcode(op::STATE_UPDATE)
                .put(&addr.to_bytes())
                .put_u64(*amount)
                .finish(),
            Self::TransactionGeneration {
                addr,
                amount,
                recipient,
            } => Encoder::with_opcode(op::TRANSACTION_GENERATION)
                .put(&addr.to_bytes())
                .put_u64(*amount)
                .put(&recipient.to_bytes())
                .finish(),
            Self::StartDelegation { addr } => Encoder::with_opcode(op::START_DELEGATION)
                .put(&addr.to_bytes())
                .finish(),
            Self::StateSeal { addr } => Encoder::with_opcode(op::STATE_SEAL).put(&addr.to_bytes()).finish(),
            Self::DelegateAtomic {
                addr,
                amount,
                recipient,
            } => Encoder::with_opcode(op::DELEGATE_ATOMIC)
                .put(&addr.to_bytes())
                .put_u64(*amount)
                .put(&recipient.to_bytes())
                .finish(),
            Self::DepositNotify { receipt } => Encoder::with_opcode(op::DEPOSIT_NOTIFY)
                .put(&receipt.encode())
                .finish(),
            Self::SealSession => vec![op::SEAL_SESSION],
            Self::RestoreSession { blob } => Encoder::with_opcode(op::RESTORE_SESSION)
                .put(&blob.to_bytes())
                .finish(),
            Self::Balance => vec![op::BALANCE],
        }
    }

    pub fn decode(input: &[u8]) -> Result<Self, EnclaveError> {
        let (opcode, args) = split_opcode(input)?;
        let mut d = Decoder::new(args);
        let cmd = match opcode {
            op::INIT_SETUP => Self::InitSetup {
                sid: SessionId(d.take_array()?),
                vk_sign: SigPublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("vk_sign"))?,
            },
            op::COMPLETE_SETUP => Self::CompleteSetup {
                sid: SessionId(d.take_array()?),
                ct_r: PkeCiphertext::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("ct_r"))?,
                sigma_r: Signature(d.take_array()?),
            },
            op::STATE_RETRIEVAL => Self::StateRetrieval {
                sid: SessionId(d.take_array()?),
                record: d.take_opt()?.map(SealedRecord::from_frame).transpose()?,
            },
            op::ADDRESS_GENERATION => Self::AddressGeneration,
            op::STATE_UPDATE => Self::StateUpdate {
                addr: addr_field(&mut d)?,
                amount: d.take_u64()?,
            },
            op::TRANSACTION_GENERATION => Self::TransactionGeneration {
                addr: addr_field(&mut d)?,
                amount: d.take_u64()?,
                recipient: addr_field(&mut d)?,
            },
            op::START_DELEGATION => Self::StartDelegation {
                addr: addr_field(&mut d)?,
            },
            op::STATE_SEAL => Self::StateSeal {
                addr: addr_field(&mut d)?,
            },
            op::DELEGATE_ATOMIC => Self::DelegateAtomic {
                addr: addr_field(&mut d)?,
                amount: d.take_u64()?,
                recipient: addr_field(&mut d)?,
            },
            op::DEPOSIT_NOTIFY => Self::DepositNotify {
                receipt: DepositReceipt::decode(d.take()?)?,
            },
            op::SEAL_SESSION => Self::SealSession,
            op::RESTORE_SESSION => Self::RestoreSession {
                blob: sym_ct_field(d.take()?)?,
            },
            op::BALANCE => Self::Balance,
            other => return Err(EnclaveError::UnknownCommand(other)),
        };
        d.finish()?;
        Ok(cmd)
    }
}

/// Output of "init setup": `(pk_O, sid, vk_sign)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitSetupOutput {
    pub pk_o: PkePublicKey,
    pub sid: SessionId,
    pub vk_sign: SigPublicKey,
}

impl InitSetupOutput {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(self.pk_o.as_bytes())
            .put(&self.sid.0)
            .put(self.vk_sign.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            pk_o: PkePublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("pk_O"))?,
            sid: SessionId(d.take_array()?),
            vk_sign: SigPublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("vk_sign"))?,
        };
        d.finish()?;
        Ok(out)
    }
}

/// Output of "address generation": `(pk_Tx, addr)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressOutput {
    pub pk_tx: SigPublicKey,
    pub addr: Address,
}

impl AddressOutput {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(self.pk_tx.as_bytes())
            .put(&self.addr.to_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            pk_tx: SigPublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("pk_Tx"))?,
            addr: addr_field(&mut d)?,
        };
        d.finish()?;
        Ok(out)
    }
}

/// Output of an atomic delegation: the encrypted transaction and the sealed
/// post-delegation balance that must be persisted before `ct_tx` is sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelegationOutput {
    pub ct_tx: SymCiphertext,
    pub record: SealedRecord,
}

impl DelegationOutput {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.ct_tx.to_bytes())
            .put(&self.record.to_frame())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            ct_tx: sym_ct_field(d.take()?)?,
            record: SealedRecord::from_frame(d.take()?)?,
        };
        d.finish()?;
        Ok(out)
    }
}

/// Public part of a restored session, so a restarted host can resume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestoredSession {
    pub sid: SessionId,
    pub vk_sign: SigPublicKey,
    pub addr: Option<Address>,
}

impl RestoredSession {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.sid.0)
            .put(self.vk_sign.as_bytes())
            .put_opt(self.addr.map(|a| a.to_bytes()).as_ref().map(|b| &b[..]))
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            sid: SessionId(d.take_array()?),
            vk_sign: SigPublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("vk_sign"))?,
            addr: d
                .take_opt()?
                .map(Address::from_bytes)
                .transpose()
                .map_err(|_| CodecError::Invalid("addr"))?,
        };
        d.finish()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepositOutput {
    pub balance: u64,
    pub record: SealedRecord,
}

impl DepositOutput {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put_u64(self.balance)
            .put(&self.record.to_frame())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            balance: d.take_u64()?,
            record: SealedRecord::from_frame(d.take()?)?,
        };
        d.finish()?;
        Ok(out)
    }
}

pub fn decode_u64(bytes: &[u8]) -> Result<u64, CodecError> {
    let mut d = Decoder::new(bytes);
    let v = d.take_u64()?;
    d.finish()?;
    Ok(v)
}

fn encode_u64(v: u64) -> Vec<u8> {
    Encoder::new().put_u64(v).finish()
}

/// Pure balance check-and-deduct used by "state update".
pub fn balance_update(balance: u64, amount: u64) -> Result<u64, EnclaveError> {
    if amount == 0 {
        return Err(EnclaveError::ZeroAmount);
    }
    balance
        .checked_sub(amount)
        .ok_or(EnclaveError::InsufficientBalance {
            balance,
            requested: amount,
        })
}

#[derive(Debug, Clone)]
struct PendingDelegation {
    amount: u64,
    tx: Option<Transaction>,
}

#[derive(Debug, Clone)]
struct OwnerState {
    pke: PkeKeypair,
    key_seal: SymKey,
    sid: SessionId,
    vk_sign: SigPublicKey,
    r: Option<SymKey>,
    tx_key: Option<SigKeypair>,
    addr: Option<Address>,
    balance: u64,
    credited: u64,
    seq: u64,
    pending: Option<PendingDelegation>,
}

impl OwnerState {
    fn own_addr(&self, addr: &Address) -> Result<Address, EnclaveError> {
        match self.addr {
            None => Err(EnclaveError::NoAddress),
            Some(own) if own != *addr => Err(EnclaveError::AddressMismatch),
            Some(own) => Ok(own),
        }
    }

    fn session_plaintext(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.pke.sk.expose())
            .put(&self.sid.0)
            .put(self.vk_sign.as_bytes())
            .put_opt(self.r.as_ref().map(|r| &r.as_bytes()[..]))
            .put_opt(self.tx_key.as_ref().map(|k| k.sk.expose()).as_ref().map(|b| &b[..]))
            .put_opt(self.addr.map(|a| a.to_bytes()).as_ref().map(|b| &b[..]))
            .finish()
    }

    fn from_session_plaintext(bytes: &[u8], key_seal: SymKey) -> Result<Self, CodecError> {
        fn invalid<E>(what: &'static str) -> impl Fn(E) -> CodecError {
            move |_| CodecError::Invalid(what)
        }
        let mut d = Decoder::new(bytes);
        let sk_o = PkeSecretKey::from_bytes(d.take()?).map_err(invalid("sk_O"))?;
        let sid = SessionId(d.take_array()?);
        let vk_sign = SigPublicKey::from_bytes(d.take()?).map_err(invalid("vk_sign"))?;
        let r = d
            .take_opt()?
            .map(|b| <[u8; 32]>::try_from(b).map(SymKey::from_bytes).map_err(invalid("r")))
            .transpose()?;
        let tx_key = d
            .take_opt()?
            .map(|b| {
                SigSecretKey::from_bytes(b).map(|sk| SigKeypair {
                    vk: sk.public_key(),
                    sk,
                })
            })
            .transpose()
            .map_err(invalid("sk_Tx"))?;
        let addr = d.take_opt()?.map(Address::from_bytes).transpose().map_err(invalid("addr"))?;
        d.finish()?;
        Ok(Self {
            pke: PkeKeypair {
                pk: sk_o.public_key(),
                sk: sk_o,
            },
            key_seal,
            sid,
            vk_sign,
            r,
            tx_key,
            addr,
            balance: 0,
            credited: 0,
            seq: 0,
            pending: None,
        })
    }

    fn state_update(&mut self, addr: &Address, amount: u64) -> Result<u64, EnclaveError> {
        self.own_addr(addr)?;
        if self.pending.is_some() {
            return Err(EnclaveError::DelegationPending);
        }
        self.balance = balance_update(self.balance, amount)?;
        self.pending = Some(PendingDelegation { amount, tx: None });
        Ok(self.balance)
    }

    fn transaction_generation(
        &mut self,
        rng: &mut dyn RngCore,
        addr: &Address,
        amount: u64,
        recipient: Address,
    ) -> Result<Transaction, EnclaveError> {
        let key = self.tx_key.as_ref().ok_or(EnclaveError::NoAddress)?;
        let addr = self.own_addr(addr)?;
        let pending = match self.pending.as_mut() {
            Some(p) if p.amount == amount && p.tx.is_none() => p,
            _ => return Err(EnclaveError::NoPendingUpdate),
        };
        let mut nonce = [0u8; 8];
        rng.fill_bytes(&mut nonce);
        let tx = Transaction::sign(
            &key.sk,
            addr,
            TxMetadata {
                recipient,
                amount,
                nonce,
            },
        );
        pending.tx = Some(tx);
        Ok(tx)
    }

    fn start_delegation(
        &self,
        rng: &mut (impl crate::crypto::CryptoRngCore + ?Sized),
        addr: &Address,
    ) -> Result<SymCiphertext, EnclaveError> {
        self.own_addr(addr)?;
        let r = self.r.as_ref().ok_or(EnclaveError::NoProvisionKey)?;
        let tx = self
            .pending
            .as_ref()
            .and_then(|p| p.tx)
            .ok_or(EnclaveError::NoPendingTx)?;
        Ok(se_enc(rng, r, &tx.to_bytes()))
    }

    fn state_seal(
        &mut self,
        rng: &mut (impl crate::crypto::CryptoRngCore + ?Sized),
        addr: &Address,
    ) -> Result<SealedRecord, EnclaveError> {
        let addr = self.own_addr(addr)?;
        self.seq += 1;
        let snapshot = BalanceSnapshot {
            addr,
            seq: self.seq,
            balance: self.balance,
            credited: self.credited,
        };
        self.pending = None;
        Ok(SealedRecord {
            addr,
            seq: self.seq,
            c_update: se_enc(rng, &self.key_seal, &snapshot.encode()),
        })
    }
}

/// Owner program `P_O`. The chain's deposit-receipt key is part of the
/// program identity, so it is covered by the measurement.
#[derive(Debug, Clone)]
pub struct OwnerProgram {
    chain_vk: SigPublicKey,
    state: Option<OwnerState>,
}

impl OwnerProgram {
    pub fn new(chain_vk: SigPublicKey) -> Self {
        Self { chain_vk, state: None }
    }

    pub fn identifier(chain_vk: &SigPublicKey) -> Vec<u8> {
        let mut id = IDENTIFIER.to_vec();
        id.extend_from_slice(chain_vk.as_bytes());
        id
    }

    pub fn image(chain_vk: SigPublicKey) -> ProgramImage {
        ProgramImage::new(NAME, Self::identifier(&chain_vk), move || Box::new(OwnerProgram::new(chain_vk)))
    }

    fn state(&mut self) -> Result<&mut OwnerState, EnclaveError> {
        self.state.as_mut().ok_or(EnclaveError::NotInitialized)
    }

    fn dispatch(&mut self, ctx: &mut EnclaveContext<'_>, cmd: OwnerCommand) -> Result<Vec<u8>, EnclaveError> {
        match cmd {
            OwnerCommand::InitSetup { sid, vk_sign } => {
                if self.state.is_some() {
                    return Err(EnclaveError::AlreadyInitialized);
                }
                let pke = pke_keygen(ctx.rng());
                let out = InitSetupOutput {
                    pk_o: pke.pk,
                    sid,
                    vk_sign,
                };
                self.state = Some(OwnerState {
                    pke,
                    key_seal: ctx.sealing_key().clone(),
                    sid,
                    vk_sign,
                    r: None,
                    tx_key: None,
                    addr: None,
                    balance: 0,
                    credited: 0,
                    seq: 0,
                    pending: None,
                });
                Ok(out.encode())
            }
            OwnerCommand::CompleteSetup { sid, ct_r, sigma_r } => {
                let st = self.state()?;
                if st.sid != sid {
                    return Err(EnclaveError::UnknownSession);
                }
                if !sig_verify(&st.vk_sign, &sigma_r, &provision_signing_bytes(&sid, &ct_r.to_bytes())) {
                    return Err(EnclaveError::BadSignature);
                }
                let r = pke_dec(&st.pke.sk, &ct_r)?;
                let r: [u8; 32] = r.try_into().map_err(|_| EnclaveError::DecryptFailure)?;
                st.r = Some(SymKey::from_bytes(r));
                Ok(Vec::new())
            }
            OwnerCommand::StateRetrieval { sid, record } => {
                let st = self.state()?;
                if st.sid != sid {
                    return Err(EnclaveError::UnknownSession);
                }
                if let Some(rec) = record {
                    st.own_addr(&rec.addr)?;
                    if rec.seq < st.seq {
                        return Err(EnclaveError::StaleRecord);
                    }
                    let plain = se_dec(&st.key_seal, &rec.c_update)?;
                    let snap = BalanceSnapshot::decode(&plain).map_err(|_| EnclaveError::IntegrityFailure)?;
                    if snap.seq != rec.seq || snap.addr != rec.addr {
                        return Err(EnclaveError::IntegrityFailure);
                    }
                    st.balance = snap.balance;
                    st.credited = snap.credited;
                    st.seq = snap.seq;
                    st.pending = None;
                }
                Ok(encode_u64(st.balance))
            }
            OwnerCommand::AddressGeneration => {
                let st = self.state.as_mut().ok_or(EnclaveError::NotInitialized)?;
                if st.tx_key.is_some() {
                    return Err(EnclaveError::AlreadyGenerated);
                }
                let kp = sig_keygen(ctx.rng());
                let addr = derive_address(&kp.vk);
                let out = AddressOutput { pk_tx: kp.vk, addr };
                st.tx_key = Some(kp);
                st.addr = Some(addr);
                Ok(out.encode())
            }
            OwnerCommand::StateUpdate { addr, amount } => {
                let b = self.state()?.state_update(&addr, amount)?;
                Ok(encode_u64(b))
            }
            OwnerCommand::TransactionGeneration {
                addr,
                amount,
                recipient,
            } => {
                let st = self.state.as_mut().ok_or(EnclaveError::NotInitialized)?;
                let tx = st.transaction_generation(ctx.rng(), &addr, amount, recipient)?;
                Ok(tx.to_bytes().to_vec())
            }
            OwnerCommand::StartDelegation { addr } => {
                let st = self.state.as_ref().ok_or(EnclaveError::NotInitialized)?;
                Ok(st.start_delegation(ctx.rng(), &addr)?.to_bytes())
            }
            OwnerCommand::StateSeal { addr } => {
                let st = self.state.as_mut().ok_or(EnclaveError::NotInitialized)?;
                Ok(st.state_seal(ctx.rng(), &addr)?.to_frame())
            }
            OwnerCommand::DelegateAtomic {
                addr,
                amount,
                recipient,
            } => {
                use checkpoints::*;
                let st = self.state.as_mut().ok_or(EnclaveError::NotInitialized)?;
                // All steps run on a copy; the live state changes only once
                // every step has succeeded.
                let mut work = st.clone();
                work.state_update(&addr, amount)?;
                ctx.checkpoint(AFTER_STATE_UPDATE)?;
                work.transaction_generation(ctx.rng(), &addr, amount, recipient)?;
                ctx.checkpoint(AFTER_TRANSACTION_GENERATION)?;
                let ct_tx = work.start_delegation(ctx.rng(), &addr)?;
                ctx.checkpoint(AFTER_START_DELEGATION)?;
                let record = work.state_seal(ctx.rng(), &addr)?;
                ctx.checkpoint(AFTER_STATE_SEAL)?;
                *st = work;
                Ok(DelegationOutput { ct_tx, record }.encode())
            }
            OwnerCommand::DepositNotify { receipt } => {
                let chain_vk = self.chain_vk;
                let st = self.state.as_mut().ok_or(EnclaveError::NotInitialized)?;
                st.own_addr(&receipt.addr)?;
                if !receipt.verify(&chain_vk) {
                    return Err(EnclaveError::BadReceipt);
                }
                if st.pending.is_some() {
                    return Err(EnclaveError::DelegationPending);
                }
                if receipt.total > st.credited {
                    st.balance += receipt.total - st.credited;
                    st.credited = receipt.total;
                }
                let record = st.state_seal(ctx.rng(), &receipt.addr)?;
                Ok(DepositOutput {
                    balance: st.balance,
                    record,
                }
                .encode())
            }
            OwnerCommand::SealSession => {
                let st = self.state.as_ref().ok_or(EnclaveError::NotInitialized)?;
                let plain = st.session_plaintext();
                Ok(se_enc(ctx.rng(), &st.key_seal, &plain).to_bytes())
            }
            OwnerCommand::RestoreSession { blob } => {
                if self.state.is_some() {
                    return Err(EnclaveError::AlreadyInitialized);
                }
                let key_seal = ctx.sealing_key().clone();
                let plain = se_dec(&key_seal, &blob)?;
                let st = OwnerState::from_session_plaintext(&plain, key_seal)
                    .map_err(|_| EnclaveError::IntegrityFailure)?;
                let out = RestoredSession {
                    sid: st.sid,
                    vk_sign: st.vk_sign,
                    addr: st.addr,
                };
                self.state = Some(st);
                Ok(out.encode())
            }
            OwnerCommand::Balance => Ok(encode_u64(self.state.as_ref().map_or(0, |s| s.balance))),
        }
    }
}

impl EnclaveProgram for OwnerProgram {
    fn call(&mut self, ctx: &mut EnclaveContext<'_>, input: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        let cmd = OwnerCommand::decode(input)?;
        self.dispatch(ctx, cmd)
    }

    fn fork(&self) -> Box<dyn EnclaveProgram> {
        Box::new(self.clone())
    }

    fn state_digest(&self) -> [u8; 32] {
        let Some(st) = &self.state else {
            return sha256(b"owner/uninitialized");
        };
        let pending = st.pending.as_ref().map(|p| {
            let mut b = p.amount.to_le_bytes().to_vec();
            if let Some(tx) = p.tx {
                b.extend_from_slice(&tx.to_bytes());
            }
            b
        });
        let bytes = Encoder::new()
            .put(&st.session_plaintext())
            .put(st.key_seal.as_bytes())
            .put_u64(st.balance)
            .put_u64(st.credited)
            .put_u64(st.seq)
            .put_opt(pending.as_deref())
            .finish();
        sha256(&bytes)
    }
}

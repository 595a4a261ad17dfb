//! Simulated blockchain: account balances, a mempool, deterministic block
//! production and double-spend rejection.
//!
//! Deposits and transactions are included in the next block produced by
//! [`ChainState::advance_blocks`] and become final once `confirmation_depth`
//! blocks (counting the including block) exist.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::crypto::{
    derive_address, sig_keygen, sig_sign, sig_verify, Address, CryptoRngCore, SigKeypair, SigPublicKey,
    SigSecretKey, Signature,
};
use crate::enclave::{Transaction, TxId};

pub const DEFAULT_CONFIRMATION_DEPTH: u64 = 6;
const DUMP_MAGIC: &[u8; 7] = b"DCHAIN1";
const RECEIPT_DOMAIN: &[u8] = b"delegacoin/deposit-receipt/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("must advance at least one block")]
    ZeroBlocks,
    #[error("confirmation depth must be at least one")]
    ZeroDepth,
    #[error("corrupt chain dump: {0}")]
    Corrupt(#[from] CodecError),
}

/// Why a transaction was refused, at submission or at block inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rejection {
    BadSig,
    AddrMismatch,
    DoubleSpend,
    Overdraft,
    NotFound,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

impl Rejection {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [Self::BadSig, Self::AddrMismatch, Self::DoubleSpend, Self::Overdraft, Self::NotFound]
            .into_iter()
            .find(|r| r.code() == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Pending,
    Confirmed { height: u64 },
    Rejected { reason: Rejection },
}

/// A deposit waiting for, or already in, a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositTicket {
    pub index: u64,
    pub addr: Address,
    pub amount: u64,
    pub submitted_at: u64,
}

/// Chain-signed statement of the total finalized deposits to `addr` as of
/// `height`. This is how an enclave learns its deposit without reading the
/// chain itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepositReceipt {
    pub addr: Address,
    pub total: u64,
    pub height: u64,
    pub sigma: Signature,
}

impl DepositReceipt {
    pub fn signing_bytes(addr: &Address, total: u64, height: u64) -> Vec<u8> {
        let mut out = RECEIPT_DOMAIN.to_vec();
        out.extend_from_slice(&addr.to_bytes());
        out.extend_from_slice(&total.to_le_bytes());
        out.extend_from_slice(&height.to_le_bytes());
        out
    }

    pub fn issue(sk: &SigSecretKey, addr: Address, total: u64, height: u64) -> Self {
        Self {
            addr,
            total,
            height,
            sigma: sig_sign(sk, &Self::signing_bytes(&addr, total, height)),
        }
    }

    pub fn verify(&self, vk: &SigPublicKey) -> bool {
        sig_verify(vk, &self.sigma, &Self::signing_bytes(&self.addr, self.total, self.height))
    }

    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.addr.to_bytes())
            .put_u64(self.total)
            .put_u64(self.height)
            .put(self.sigma.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            addr: Address::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("addr"))?,
            total: d.take_u64()?,
            height: d.take_u64()?,
            sigma: Signature(d.take_array()?),
        };
        d.finish()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct IncludedDeposit {
    addr: Address,
    amount: u64,
    height: u64,
}

/// A transaction in a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncludedTx {
    pub tx: Transaction,
    pub height: u64,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    receipt_key: SigKeypair,
    confirmation_depth: u64,
    height: u64,
    next_deposit: u64,
    pending_deposits: Vec<DepositTicket>,
    deposits: Vec<IncludedDeposit>,
    mempool: Vec<Transaction>,
    included: Vec<IncludedTx>,
    spent: HashSet<(Address, [u8; 8])>,
    dropped: HashMap<TxId, Rejection>,
    tip: BTreeMap<Address, u64>,
}

impl ChainState {
    pub fn new(confirmation_depth: u64, rng: &mut (impl CryptoRngCore + ?Sized)) -> Result<Self, ChainError> {
        if confirmation_depth == 0 {
            return Err(ChainError::ZeroDepth);
        }
        Ok(Self {
            receipt_key: sig_keygen(rng),
            confirmation_depth,
            height: 0,
            next_deposit: 0,
            pending_deposits: Vec::new(),
            deposits: Vec::new(),
            mempool: Vec::new(),
            included: Vec::new(),
            spent: HashSet::new(),
            dropped: HashMap::new(),
            tip: BTreeMap::new(),
        })
    }

    pub fn receipt_key(&self) -> SigPublicKey {
        self.receipt_key.vk
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn confirmation_depth(&self) -> u64 {
        self.confirmation_depth
    }

    fn is_final(&self, included_at: u64) -> bool {
        self.height + 1 >= included_at + self.confirmation_depth
    }

    pub fn deposit(&mut self, addr: Address, amount: u64) -> Result<DepositTicket, ChainError> {
        if amount == 0 {
            return Err(ChainError::ZeroAmount);
        }
        let ticket = DepositTicket {
            index: self.next_deposit,
            addr,
            amount,
            submitted_at: self.height,
        };
        self.next_deposit += 1;
        self.pending_deposits.push(ticket);
        Ok(ticket)
    }

    fn check_shape(tx: &Transaction) -> Result<(), Rejection> {
        if !tx.verify_signature() {
            return Err(Rejection::BadSig);
        }
        if derive_address(&tx.pk_tx) != tx.addr {
            return Err(Rejection::AddrMismatch);
        }
        Ok(())
    }

    fn outgoing_in_mempool(&self, addr: &Address) -> u64 {
        self.mempool
            .iter()
            .filter(|t| t.addr == *addr)
            .map(|t| t.amount())
            .sum()
    }

    /// Full node validation: signature, address binding, nonce uniqueness
    /// against blocks and mempool, and sufficient unreserved balance.
    pub fn submit(&mut self, tx: Transaction) -> Result<TxId, Rejection> {
        Self::check_shape(&tx)?;
        let key = (tx.addr, tx.metadata.nonce);
        if self.spent.contains(&key) || self.mempool.iter().any(|t| (t.addr, t.metadata.nonce) == key) {
            return Err(Rejection::DoubleSpend);
        }
        let available = self.tip_balance(&tx.addr).saturating_sub(self.outgoing_in_mempool(&tx.addr));
        if tx.amount() > available {
            return Err(Rejection::Overdraft);
        }
        self.mempool.push(tx);
        Ok(tx.id())
    }

    /// Mempool entry relayed by a peer: only stateless checks run here, so
    /// conflicting transactions can coexist until block inclusion.
    pub fn accept_from_peer(&mut self, tx: Transaction) -> Result<TxId, Rejection> {
        Self::check_shape(&tx)?;
        self.mempool.push(tx);
        Ok(tx.id())
    }

    /// Produces `n` blocks. The first includes pending deposits, then
    /// mempool transactions in arrival order; invalid ones are dropped.
    pub fn advance_blocks(&mut self, n: u64) -> Result<u64, ChainError> {
        if n == 0 {
            return Err(ChainError::ZeroBlocks);
        }
        for _ in 0..n {
            self.height += 1;
            let h = self.height;
            for d in std::mem::take(&mut self.pending_deposits) {
                *self.tip.entry(d.addr).or_default() += d.amount;
                self.deposits.push(IncludedDeposit {
                    addr: d.addr,
                    amount: d.amount,
                    height: h,
                });
            }
            for tx in std::mem::take(&mut self.mempool) {
                let key = (tx.addr, tx.metadata.nonce);
                if self.spent.contains(&key) {
                    self.dropped.insert(tx.id(), Rejection::DoubleSpend);
                    continue;
                }
                let bal = self.tip_balance(&tx.addr);
                if tx.amount() > bal {
                    self.dropped.insert(tx.id(), Rejection::Overdraft);
                    continue;
                }
                self.spent.insert(key);
                self.tip.insert(tx.addr, bal - tx.amount());
                *self.tip.entry(tx.metadata.recipient).or_default() += tx.amount();
                self.included.push(IncludedTx { tx, height: h });
            }
            debug_assert!(self.conservation_holds());
        }
        Ok(self.height)
    }

    /// Balance including every block, final or not.
    pub fn tip_balance(&self, addr: &Address) -> u64 {
        self.tip.get(addr).copied().unwrap_or(0)
    }

    /// Settled balance: credits count once final, debits as soon as included.
    pub fn balance_of(&self, addr: &Address) -> u64 {
        let credits: u64 = self
            .deposits
            .iter()
            .filter(|d| d.addr == *addr && self.is_final(d.height))
            .map(|d| d.amount)
            .chain(
                self.included
                    .iter()
                    .filter(|t| t.tx.metadata.recipient == *addr && self.is_final(t.height))
                    .map(|t| t.tx.amount()),
            )
            .sum();
        let debits: u64 = self
            .included
            .iter()
            .filter(|t| t.tx.addr == *addr)
            .map(|t| t.tx.amount())
            .sum();
        credits.saturating_sub(debits)
    }

    /// Sum of finalized deposits made directly to `addr`.
    pub fn final_deposits(&self, addr: &Address) -> u64 {
        self.deposits
            .iter()
            .filter(|d| d.addr == *addr && self.is_final(d.height))
            .map(|d| d.amount)
            .sum()
    }

    pub fn deposit_receipt(&self, addr: &Address) -> DepositReceipt {
        DepositReceipt::issue(&self.receipt_key.sk, *addr, self.final_deposits(addr), self.height)
    }

    pub fn tx_status(&self, id: &TxId) -> TxStatus {
        if let Some(t) = self.included.iter().find(|t| t.tx.id() == *id) {
            return if self.is_final(t.height) {
                TxStatus::Confirmed { height: t.height }
            } else {
                TxStatus::Pending
            };
        }
        if self.mempool.iter().any(|t| t.id() == *id) {
            return TxStatus::Pending;
        }
        TxStatus::Rejected {
            reason: self.dropped.get(id).copied().unwrap_or(Rejection::NotFound),
        }
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn included(&self) -> &[IncludedTx] {
        &self.included
    }

    /// Included transactions that have reached confirmation depth.
    pub fn confirmed(&self) -> impl Iterator<Item = &IncludedTx> {
        self.included.iter().filter(|t| self.is_final(t.height))
    }

    /// Sum of confirmed spends out of `addr`.
    pub fn confirmed_outgoing(&self, addr: &Address) -> u64 {
        self.confirmed().filter(|t| t.tx.addr == *addr).map(|t| t.tx.amount()).sum()
    }

    pub fn total_deposited(&self) -> u64 {
        self.deposits.iter().map(|d| d.amount).sum()
    }

    /// Transfers move value between accounts without creating any, so the
    /// tip balances sum to the included deposits. Mempool entries hold no
    /// value until included.
    pub fn conservation_holds(&self) -> bool {
        let held: u128 = self.tip.values().map(|&v| v as u128).sum();
        held == self.total_deposited() as u128
    }

    pub fn dump(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.put(DUMP_MAGIC)
            .put(&self.receipt_key.sk.expose())
            .put_u64(self.confirmation_depth)
            .put_u64(self.height)
            .put_u64(self.next_deposit);
        e.put_u64(self.pending_deposits.len() as u64);
        for d in &self.pending_deposits {
            e.put_u64(d.index)
                .put(&d.addr.to_bytes())
                .put_u64(d.amount)
                .put_u64(d.submitted_at);
        }
        e.put_u64(self.deposits.len() as u64);
        for d in &self.deposits {
            e.put(&d.addr.to_bytes()).put_u64(d.amount).put_u64(d.height);
        }
        e.put_u64(self.mempool.len() as u64);
        for t in &self.mempool {
            e.put(&t.to_bytes());
        }
        e.put_u64(self.included.len() as u64);
        for t in &self.included {
            e.put(&t.tx.to_bytes()).put_u64(t.height);
        }
        let mut dropped: Vec<_> = self.dropped.iter().collect();
        dropped.sort();
        e.put_u64(dropped.len() as u64);
        for (id, r) in dropped {
            e.put(&id.0).put(&[r.code()]);
        }
        e.finish()
    }

    pub fn load(bytes: &[u8]) -> Result<Self, ChainError> {
        let addr = |b: &[u8]| Address::from_bytes(b).map_err(|_| CodecError::Invalid("addr"));
        let mut d = Decoder::new(bytes);
        if d.take()? != DUMP_MAGIC {
            return Err(CodecError::Invalid("chain dump magic").into());
        }
        let sk = SigSecretKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("receipt key"))?;
        let confirmation_depth = d.take_u64()?;
        if confirmation_depth == 0 {
            return Err(ChainError::ZeroDepth);
        }
        let height = d.take_u64()?;
        let next_deposit = d.take_u64()?;
        let mut pending_deposits = Vec::new();
        for _ in 0..d.take_u64()? {
            pending_deposits.push(DepositTicket {
                index: d.take_u64()?,
                addr: addr(d.take()?)?,
                amount: d.take_u64()?,
                submitted_at: d.take_u64()?,
            });
        }
        let mut deposits = Vec::new();
        for _ in 0..d.take_u64()? {
            deposits.push(IncludedDeposit {
                addr: addr(d.take()?)?,
                amount: d.take_u64()?,
                height: d.take_u64()?,
            });
        }
        let mut mempool = Vec::new();
        for _ in 0..d.take_u64()? {
            mempool.push(Transaction::from_bytes(d.take()?)?);
        }
        let mut included = Vec::new();
        for _ in 0..d.take_u64()? {
            included.push(IncludedTx {
                tx: Transaction::from_bytes(d.take()?)?,
                height: d.take_u64()?,
            });
        }
        let mut dropped = HashMap::new();
        for _ in 0..d.take_u64()? {
            let id = TxId(d.take_array()?);
            let [code] = d.take_array()?;
            dropped.insert(id, Rejection::from_code(code).ok_or(CodecError::Invalid("rejection"))?);
        }
        d.finish()?;

        // Tip balances and the spent set are derived, not stored.
        let mut tip = BTreeMap::new();
        for dep in &deposits {
            *tip.entry(dep.addr).or_default() += dep.amount;
        }
        let mut spent = HashSet::new();
        for t in &included {
            spent.insert((t.tx.addr, t.tx.metadata.nonce));
            let from: &mut u64 = tip.entry(t.tx.addr).or_default();
            *from = from.checked_sub(t.tx.amount()).ok_or(CodecError::Invalid("overdrawn account"))?;
            *tip.entry(t.tx.metadata.recipient).or_default() += t.tx.amount();
        }
        Ok(Self {
            receipt_key: SigKeypair {
                vk: sk.public_key(),
                sk,
            },
            confirmation_depth,
            height,
            next_deposit,
            pending_deposits,
            deposits,
            mempool,
            included,
            spent,
            dropped,
            tip,
        })
    }
}

/// Shared, linearizable handle to one chain. Every operation is counted so
/// tests can assert that a protocol phase never touched the chain.
#[derive(Debug, Clone)]
pub struct ChainHandle {
    state: Arc<Mutex<ChainState>>,
    calls: Arc<AtomicU64>,
}

impl ChainHandle {
    pub fn new(state: ChainState) -> Self {
        Self {
            state: Arc::new(Mutex::new(state)),
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Number of chain operations performed through any clone of this handle.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Runs `f` under the chain lock, counted as one call.
    pub fn with<T>(&self, f: impl FnOnce(&mut ChainState) -> T) -> T {
        self.calls.fetch_add(1, Ordering::SeqCst);
        f(&mut self.state.lock())
    }

    pub fn deposit(&self, addr: Address, amount: u64) -> Result<DepositTicket, ChainError> {
        self.with(|c| c.deposit(addr, amount))
    }

    pub fn submit(&self, tx: Transaction) -> Result<TxId, Rejection> {
        self.with(|c| c.submit(tx))
    }

    pub fn accept_from_peer(&self, tx: Transaction) -> Result<TxId, Rejection> {
        self.with(|c| c.accept_from_peer(tx))
    }

    pub fn advance_blocks(&self, n: u64) -> Result<u64, ChainError> {
        self.with(|c| c.advance_blocks(n))
    }

    pub fn balance_of(&self, addr: &Address) -> u64 {
        self.with(|c| c.balance_of(addr))
    }

    pub fn tx_status(&self, id: &TxId) -> TxStatus {
        self.with(|c| c.tx_status(id))
    }

    pub fn deposit_receipt(&self, addr: &Address) -> DepositReceipt {
        self.with(|c| c.deposit_receipt(addr))
    }

    pub fn height(&self) -> u64 {
        self.with(|c| c.height())
    }

    pub fn confirmation_depth(&self) -> u64 {
        self.with(|c| c.confirmation_depth())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclave::TxMetadata;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        chain: ChainState,
        owner: SigKeypair,
        addr: Address,
        rng: ChaCha20Rng,
    }

    fn funded(amount: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut chain = ChainState::new(DEFAULT_CONFIRMATION_DEPTH, &mut rng).unwrap();
        let owner = sig_keygen(&mut rng);
        let addr = derive_address(&owner.vk);
        chain.deposit(addr, amount).unwrap();
        chain.advance_blocks(6).unwrap();
        Fixture { chain, owner, addr, rng }
    }

    impl Fixture {
        fn tx(&mut self, amount: u64, nonce: u8) -> Transaction {
            let to = derive_address(&sig_keygen(&mut self.rng).vk);
            Transaction::sign(
                &self.owner.sk,
                self.addr,
                TxMetadata {
                    recipient: to,
                    amount,
                    nonce: [nonce; 8],
                },
            )
        }
    }

    #[test]
    fn deposits_need_full_depth() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut chain = ChainState::new(6, &mut rng).unwrap();
        let a = derive_address(&sig_keygen(&mut rng).vk);
        assert_eq!(chain.balance_of(&a), 0);
        chain.deposit(a, 500).unwrap();
        chain.advance_blocks(5).unwrap();
        assert_eq!(chain.balance_of(&a), 0);
        chain.advance_blocks(1).unwrap();
        assert_eq!(chain.balance_of(&a), 500);
        assert_eq!(chain.deposit(a, 0), Err(ChainError::ZeroAmount));
        assert_eq!(chain.advance_blocks(0), Err(ChainError::ZeroBlocks));
    }

    #[test]
    fn honest_transaction_confirms_after_depth() {
        let mut f = funded(500);
        let tx = f.tx(200, 1);
        let id = f.chain.submit(tx).unwrap();
        assert_eq!(f.chain.tx_status(&id), TxStatus::Pending);
        f.chain.advance_blocks(5).unwrap();
        assert_eq!(f.chain.tx_status(&id), TxStatus::Pending);
        f.chain.advance_blocks(1).unwrap();
        assert!(matches!(f.chain.tx_status(&id), TxStatus::Confirmed { .. }));
        assert_eq!(f.chain.balance_of(&f.addr), 300);
        assert_eq!(f.chain.balance_of(&tx.metadata.recipient), 200);
    }

    #[test]
    fn each_rejection_reason_reachable() {
        let mut f = funded(500);
        let tx = f.tx(200, 1);

        let mut bad = tx.to_bytes();
        bad[100] ^= 1;
        assert_eq!(f.chain.submit(Transaction::from_bytes(&bad).unwrap()), Err(Rejection::BadSig));

        // valid signature by a key that does not own the source address
        let thief = sig_keygen(&mut f.rng);
        let stolen = Transaction::sign(&thief.sk, f.addr, tx.metadata);
        assert_eq!(f.chain.submit(stolen), Err(Rejection::AddrMismatch));

        f.chain.submit(tx).unwrap();
        assert_eq!(f.chain.submit(tx), Err(Rejection::DoubleSpend));
        let big = f.tx(301, 2);
        assert_eq!(f.chain.submit(big), Err(Rejection::Overdraft));

        f.chain.advance_blocks(6).unwrap();
        assert_eq!(f.chain.submit(tx), Err(Rejection::DoubleSpend));
        assert_eq!(
            f.chain.tx_status(&TxId([0; 32])),
            TxStatus::Rejected {
                reason: Rejection::NotFound
            }
        );
    }

    #[test]
    fn every_signature_bit_flip_is_bad_sig() {
        let mut f = funded(500);
        let tx = f.tx(10, 1);
        let bytes = tx.to_bytes();
        for bit in 0..512 {
            let mut m = bytes;
            m[99 + bit / 8] ^= 1 << (bit % 8);
            let t = Transaction::from_bytes(&m).unwrap();
            assert_eq!(f.chain.submit(t), Err(Rejection::BadSig), "bit {bit}");
        }
    }

    #[test]
    fn conflicting_mempool_entries_first_wins() {
        let mut f = funded(500);
        let tx = f.tx(200, 1);
        let a = f.chain.accept_from_peer(tx).unwrap();
        f.chain.accept_from_peer(tx).unwrap();
        assert_eq!(f.chain.mempool().len(), 2);
        f.chain.advance_blocks(6).unwrap();
        assert_eq!(f.chain.included().len(), 1);
        assert!(matches!(f.chain.tx_status(&a), TxStatus::Confirmed { .. }));
        assert_eq!(f.chain.balance_of(&f.addr), 300);

        // distinct nonces but together overdraw
        let x = f.tx(200, 2);
        let y = f.tx(200, 3);
        f.chain.accept_from_peer(x).unwrap();
        let yid = f.chain.accept_from_peer(y).unwrap();
        f.chain.advance_blocks(6).unwrap();
        assert_eq!(
            f.chain.tx_status(&yid),
            TxStatus::Rejected {
                reason: Rejection::Overdraft
            }
        );
        assert!(f.chain.conservation_holds());
    }

    #[test]
    fn receipts_verify_under_chain_key_only() {
        let mut f = funded(500);
        let r = f.chain.deposit_receipt(&f.addr);
        assert_eq!(r.total, 500);
        assert!(r.verify(&f.chain.receipt_key()));
        assert!(!r.verify(&sig_keygen(&mut f.rng).vk));
        let inflated = DepositReceipt { total: 5000, ..r };
        assert!(!inflated.verify(&f.chain.receipt_key()));
        assert_eq!(DepositReceipt::decode(&r.encode()).unwrap(), r);
    }

    #[test]
    fn dump_round_trips() {
        let mut f = funded(500);
        let t1 = f.tx(100, 1);
        f.chain.submit(t1).unwrap();
        f.chain.advance_blocks(2).unwrap();
        let t2 = f.tx(50, 2);
        f.chain.submit(t2).unwrap();
        f.chain.accept_from_peer(t1).unwrap();
        f.chain.advance_blocks(1).unwrap();
        f.chain.deposit(f.addr, 7).unwrap();
        let bytes = f.chain.dump();
        let loaded = ChainState::load(&bytes).unwrap();
        assert_eq!(loaded.dump(), bytes);
        assert_eq!(loaded.balance_of(&f.addr), f.chain.balance_of(&f.addr));
        assert_eq!(loaded.tx_status(&t1.id()), f.chain.tx_status(&t1.id()));
        assert_eq!(loaded.receipt_key(), f.chain.receipt_key());

        let mut corrupt = bytes.clone();
        corrupt[5] ^= 0xff;
        assert!(ChainState::load(&corrupt).is_err());
        assert!(ChainState::load(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn handle_counts_calls() {
        let f = funded(1);
        let h = ChainHandle::new(f.chain);
        assert_eq!(h.calls(), 0);
        h.height();
        h.balance_of(&f.addr);
        assert_eq!(h.clone().calls(), 2);
    }
}

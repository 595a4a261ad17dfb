//! Scripted malicious owners, delegatees and networks run against the full
//! stack. Each attack step that the system refuses is logged with the check
//! that stopped it; a step that goes through is a breach.

use std::collections::HashSet;
use std::fmt::Display;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{derive_address, sig_keygen, Address};
use crate::enclave::delegatee;
use crate::enclave::{Transaction, TxMetadata};
use crate::runtime::{
    delegate_decode, delegate_encode, pair, DelegationOutcome, DelegateeNode, Direction, Envelope, OwnerNode, Phase, SealStore,
    SimConfig, Simulation,
};

use super::HarnessError;

/// Registered scenario names with a one-line description.
pub const SCENARIOS: [(&str, &str); 4] = [
    (
        "double-delegate-two-delegatees",
        "owner replays one ct_tx to a second delegatee; both try to spend",
    ),
    (
        "owner-front-run",
        "owner re-delegates or spends balance it already delegated",
    ),
    (
        "delegatee-forge-amount",
        "delegatee rewrites the amount or recipient of its transaction",
    ),
    (
        "ct-tx-replay",
        "network and delegatee replay ct_tx and the decrypted transaction",
    ),
];

const DEPOSIT: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Defended,
    Breached,
}

impl Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Defended => "defended",
            Verdict::Breached => "breached",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub verdict: Verdict,
    /// One entry per refused attack step: the step and the check that refused it.
    pub stopped_by: Vec<String>,
    pub breaches: Vec<String>,
    /// Confirmed spends out of the owner's address, in confirmation order.
    pub confirmed_amounts: Vec<u64>,
    /// Amounts the owner legitimately delegated.
    pub delegated_amounts: Vec<u64>,
    pub transcript: String,
}

struct Script {
    sim: Simulation,
    stopped_by: Vec<String>,
    breaches: Vec<String>,
    delegated: Vec<u64>,
}

impl Script {
    fn new(seed: u64) -> Result<Self, HarnessError> {
        let mut sim = Simulation::new(SimConfig {
            seed,
            ..SimConfig::default()
        })?;
        sim.run_setup()?;
        sim.run_deposit(DEPOSIT)?;
        sim.transcript.note(format!("setup complete; owner deposited {DEPOSIT}"));
        Ok(Self {
            sim,
            stopped_by: Vec::new(),
            breaches: Vec::new(),
            delegated: Vec::new(),
        })
    }

    fn note(&mut self, text: impl AsRef<str>) {
        self.sim.transcript.note(text);
    }

    /// An attack step that must be refused.
    fn refused<T, E: Display>(&mut self, step: &str, result: Result<T, E>) -> Option<T> {
        match result {
            Err(e) => {
                self.note(format!("attack: {step}"));
                self.note(format!("stopped: {e}"));
                self.stopped_by.push(format!("{step}: {e}"));
                None
            }
            Ok(v) => {
                self.note(format!("attack: {step}"));
                self.note("BREACH: step succeeded");
                self.breaches.push(step.to_string());
                Some(v)
            }
        }
    }

    fn delegate(&mut self, amount: u64) -> Result<DelegationOutcome, HarnessError> {
        let out = self.sim.run_delegation(amount)?;
        self.delegated.push(amount);
        self.note(format!("owner delegated {amount} as seq {}", out.seq));
        Ok(out)
    }

    fn spend(&mut self, seq: u64) -> Result<(), HarnessError> {
        let id = self.sim.run_spend(seq)?;
        self.note(format!("delegatee broadcast seq {seq} as {id}"));
        Ok(())
    }

    fn confirm(&mut self) -> Result<(), HarnessError> {
        self.sim.confirm()?;
        self.note(format!("chain advanced to height {}", self.sim.chain().height()));
        Ok(())
    }

    fn finish(mut self, name: &str) -> ScenarioReport {
        let addr = self.sim.owner.addr().expect("scenario ran setup");
        let (confirmed, conserved, nonces_unique) = self.sim.chain().with(|c| {
            let mine: Vec<_> = c.confirmed().filter(|t| t.tx.addr == addr).map(|t| t.tx).collect();
            let nonces: HashSet<_> = mine.iter().map(|t| t.metadata.nonce).collect();
            let unique = nonces.len() == mine.len();
            (mine, c.conservation_holds(), unique)
        });
        let confirmed_amounts: Vec<u64> = confirmed.iter().map(Transaction::amount).collect();
        let spent: u64 = confirmed_amounts.iter().sum();
        if !conserved {
            self.breaches.push("chain balances no longer sum to deposits".into());
        }
        if !nonces_unique {
            self.breaches.push("one transaction confirmed twice".into());
        }
        if spent > DEPOSIT {
            self.breaches.push(format!("confirmed spends {spent} exceed deposit {DEPOSIT}"));
        }
        let mut want = self.delegated.clone();
        let mut got = confirmed_amounts.clone();
        want.sort_unstable();
        got.sort_unstable();
        if want != got {
            self.breaches.push(format!("confirmed {got:?}, delegated {want:?}"));
        }
        let verdict = if self.breaches.is_empty() {
            Verdict::Defended
        } else {
            Verdict::Breached
        };
        self.note(format!("confirmed spends from owner: {confirmed_amounts:?}"));
        self.note(format!("verdict: {verdict}"));
        ScenarioReport {
            name: name.to_string(),
            verdict,
            stopped_by: self.stopped_by,
            breaches: self.breaches,
            confirmed_amounts,
            delegated_amounts: self.delegated,
            transcript: self.sim.transcript.render(),
        }
    }
}

pub fn run_attack_scenario(name: &str, seed: u64) -> Result<ScenarioReport, HarnessError> {
    if !SCENARIOS.iter().any(|(n, _)| *n == name) {
        return Err(HarnessError::UnknownScenario(name.to_string()));
    }
    let script = Script::new(seed)?;
    let script = match name {
        "double-delegate-two-delegatees" => double_delegate(script)?,
        "owner-front-run" => owner_front_run(script)?,
        "delegatee-forge-amount" => forge_amount(script)?,
        "ct-tx-replay" => ct_tx_replay(script)?,
        _ => unreachable!("checked against the registry"),
    };
    Ok(script.finish(name))
}

fn double_delegate(mut s: Script) -> Result<Script, HarnessError> {
    // The owner host brings up a second owner enclave and pairs it with a
    // second delegatee, giving D2 a provision key of its own.
    let hw = s.sim.hw().clone();
    let mut o2 = OwnerNode::new(hw.clone(), SealStore::memory())?;
    let mut d2 = DelegateeNode::new(hw, delegatee::NAME)?;
    pair(&mut o2, &mut d2)?;
    s.note("owner paired a second enclave with delegatee D2");

    let DelegationOutcome { seq, tx, ct_tx, .. } = s.delegate(60)?;

    s.refused("replay ct_tx to D2", d2.receive(seq, &ct_tx));
    s.refused(
        "delegate the same 60 to D2 from the second enclave",
        o2.delegate(60, d2.payout()),
    );
    let again = s.sim.owner.delegate(60, d2.payout());
    s.refused("delegate 60 again from the funded enclave", again);

    s.spend(seq)?;
    let chain = s.sim.chain().clone();
    s.refused("D2 broadcasts the Tx obtained from D1", chain.submit(tx));
    s.confirm()?;
    Ok(s)
}

fn owner_front_run(mut s: Script) -> Result<Script, HarnessError> {
    let seq = s.delegate(80)?.seq;
    let recipient = s.sim.delegatee.payout();
    let again = s.sim.owner.delegate(80, recipient);
    s.refused("delegate the same 80 again", again);

    s.sim.crash_owner();
    let rec = s.sim.recover_owner()?;
    s.note(format!("owner restarted; recovered balance {}", rec.balance));
    let again = s.sim.owner.delegate(80, recipient);
    s.refused("delegate the same 80 again after restart", again);

    let addr = s.sim.owner.addr().expect("address restored");
    let receipt = s.sim.chain().deposit_receipt(&addr);
    let before = s.sim.owner.balance()?;
    let after = s.sim.owner.notify_deposit(receipt)?;
    s.refused(
        "replay the deposit receipt to re-credit the deposit",
        if after > before { Ok(after) } else { Err(format!("balance stays {after}")) },
    );

    // Spend the deposit on chain before the delegatee does, with a key the
    // host controls.
    let mut rng = ChaCha20Rng::from_seed([7; 32]);
    let host_key = sig_keygen(&mut rng);
    let front = Transaction::sign(
        &host_key.sk,
        addr,
        TxMetadata {
            recipient: derive_address(&host_key.vk),
            amount: DEPOSIT,
            nonce: [0xee; 8],
        },
    );
    let chain = s.sim.chain().clone();
    s.refused("broadcast a host-signed spend of the deposit", chain.submit(front));

    s.spend(seq)?;
    let last = s.delegate(20)?.seq;
    s.spend(last)?;
    s.confirm()?;
    Ok(s)
}

fn forge_amount(mut s: Script) -> Result<Script, HarnessError> {
    let DelegationOutcome { seq, tx, .. } = s.delegate(30)?;
    let chain = s.sim.chain().clone();

    let mut inflated = tx;
    inflated.metadata.amount = DEPOSIT;
    s.refused("broadcast the Tx with amount raised to 100", chain.submit(inflated));

    let mut redirected = tx;
    redirected.metadata.recipient = Address::new(redirected.metadata.recipient.version(), [0x42; 20]);
    s.refused("broadcast the Tx with a new recipient", chain.submit(redirected));

    let mut bytes = tx.to_bytes();
    bytes[83] ^= 0x01;
    let flipped = Transaction::from_bytes(&bytes)?;
    s.refused("broadcast the Tx with one amount bit flipped", chain.submit(flipped));

    s.spend(seq)?;
    s.confirm()?;
    Ok(s)
}

fn ct_tx_replay(mut s: Script) -> Result<Script, HarnessError> {
    // A network attacker delivers every ct_tx three times.
    s.sim.link.set_interceptor(Box::new(|dir, env: Envelope| {
        if dir == Direction::OwnerToDelegatee && env.phase == Phase::Delegate {
            vec![env.clone(), env.clone(), env]
        } else {
            vec![env]
        }
    }));
    let DelegationOutcome { seq, ct_tx: ct, .. } = s.delegate(40)?;
    while let Some(bytes) = s.sim.link.recv(Direction::OwnerToDelegatee) {
        let env = Envelope::decode(&bytes)?;
        let (got, ct) = delegate_decode(&env.body)?;
        let before = s.sim.delegatee.received().len();
        s.sim.delegatee.receive(got, &ct).ok();
        let grew = s.sim.delegatee.received().len() > before;
        s.refused(
            "network replays ct_tx to the delegatee",
            if grew { Ok(()) } else { Err("duplicate sequence number ignored") },
        );
    }
    s.sim.link.clear_interceptor();

    // The delegatee feeds the same ct_tx back under a new sequence number
    // to hold the transaction twice.
    let replay_seq = seq + 1000;
    let copy = s.sim.delegatee.receive(replay_seq, &ct)?;
    s.note(format!("delegatee holds a second copy under seq {replay_seq}"));
    s.sim.transcript.record(&Envelope::new(
        Phase::Delegate,
        s.sim.delegatee.sid(),
        delegate_encode(replay_seq, &ct),
    ));

    s.spend(seq)?;
    let chain = s.sim.chain().clone();
    s.refused("broadcast the second copy", chain.submit(copy));
    s.confirm()?;
    s.refused("broadcast the copy again after confirmation", chain.submit(copy));
    let status = chain.tx_status(&copy.id());
    s.note(format!("status of the spent transaction: {status:?}"));
    Ok(s)
}

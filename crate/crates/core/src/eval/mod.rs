//! Reproducible runs: the end-to-end demo, the operation timing table and
//! the seal-store growth measurement.

mod bench;
mod config;
mod diskgrowth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::TxStatus;
use crate::enclave::TxId;
use crate::runtime::{RuntimeError, SimConfig, Simulation};

pub use bench::{run_bench, BenchReport, BenchRow, BENCH_ITERATIONS, BENCH_OPERATIONS, DELEGATION_BUDGET_MS, DELEGATION_CLAIM_MS};
pub use config::{parse_schedule, ConfigError, FaultPlan, RunConfig};
pub use diskgrowth::{linear_fit, run_diskgrowth, DiskGrowthReport, LinearFit, DISK_GROWTH_SIZES};

/// How a delegation in the schedule ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum DelegationResult {
    /// Delegated and broadcast by the delegatee.
    Delegated { seq: u64 },
    Refused { reason: String },
    /// The owner crashed mid-delegation. `seq` is set when the delegation
    /// had been committed and was delivered after recovery.
    Crashed { point: String, seq: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegationLine {
    pub amount: u64,
    #[serde(flatten)]
    pub result: DelegationResult,
    /// Chain status of the delegatee's spend, once the run has finished.
    pub status: Option<TxStatus>,
}

impl DelegationLine {
    pub fn seq(&self) -> Option<u64> {
        match self.result {
            DelegationResult::Delegated { seq } | DelegationResult::Crashed { seq: Some(seq), .. } => Some(seq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoReport {
    /// 0 when every step succeeded, 1 on any protocol error.
    pub exit_code: i32,
    pub error: Option<String>,
    pub delegations: Vec<DelegationLine>,
    pub owner_enclave_balance: u64,
    pub owner_chain_balance: u64,
    pub delegatee_chain_balance: u64,
    pub chain_calls_during_delegation: u64,
    pub transcript: String,
}

/// Setup, deposit, then each scheduled delegation followed by the
/// delegatee's spend; finally confirms everything. Refused delegations do
/// not stop the run but make the exit code 1.
pub fn run_demo(cfg: &RunConfig) -> Result<DemoReport, ConfigError> {
    cfg.validate()?;
    let mut report = DemoReport {
        exit_code: 0,
        error: None,
        delegations: Vec::new(),
        owner_enclave_balance: 0,
        owner_chain_balance: 0,
        delegatee_chain_balance: 0,
        chain_calls_during_delegation: 0,
        transcript: String::new(),
    };
    let sim = Simulation::new(SimConfig {
        seed: cfg.seed,
        confirmation_depth: cfg.confirmation_depth,
        link_faults: cfg.fault_plan.link,
        store_path: None,
    });
    let mut sim = match sim {
        Ok(s) => s,
        Err(e) => {
            report.exit_code = 1;
            report.error = Some(e.to_string());
            return Ok(report);
        }
    };
    sim.transcript.note(format!(
        "seed={} deposit={} schedule={:?} depth={} faults={}",
        cfg.seed, cfg.deposit_amount, cfg.delegation_schedule, cfg.confirmation_depth, cfg.fault_plan
    ));
    let mut spent = BTreeMap::new();
    if let Err(e) = drive(&mut sim, cfg, &mut report, &mut spent) {
        sim.transcript.note(format!("error: {e}"));
        report.exit_code = 1;
        report.error = Some(e.to_string());
    }
    if let Some(addr) = sim.owner.addr() {
        report.owner_chain_balance = sim.chain().balance_of(&addr);
    }
    report.owner_enclave_balance = sim.owner.balance().unwrap_or(0);
    report.delegatee_chain_balance = sim.chain().balance_of(&sim.delegatee.payout());
    for line in &mut report.delegations {
        line.status = line.seq().and_then(|s| spent.get(&s)).map(|id| sim.chain().tx_status(id));
        sim.transcript.note(format!(
            "delegation {}: {:?} {}",
            line.amount,
            line.result,
            line.status.as_ref().map_or("not spent".to_string(), |s| format!("{s:?}"))
        ));
    }
    sim.transcript.note(format!(
        "final: owner enclave balance {}, owner chain balance {}, delegatee chain balance {}",
        report.owner_enclave_balance, report.owner_chain_balance, report.delegatee_chain_balance
    ));
    sim.transcript.note(format!("exit {}", report.exit_code));
    report.transcript = sim.transcript.render();
    Ok(report)
}

fn drive(
    sim: &mut Simulation,
    cfg: &RunConfig,
    report: &mut DemoReport,
    spent: &mut BTreeMap<u64, TxId>,
) -> Result<(), RuntimeError> {
    sim.run_setup()?;
    let dep = sim.run_deposit(cfg.deposit_amount)?;
    sim.transcript.note(format!(
        "deposit {} confirmed to {}; enclave balance {}",
        cfg.deposit_amount, dep.addr, dep.enclave_balance
    ));
    for (i, &amount) in cfg.delegation_schedule.iter().enumerate() {
        if let Some((point, n)) = cfg.fault_plan.crash {
            if n == i + 1 {
                sim.owner.arm(point);
            }
        }
        let result = match sim.run_delegation(amount) {
            Ok(out) => {
                report.chain_calls_during_delegation += out.chain_calls;
                spent.insert(out.seq, sim.run_spend(out.seq)?);
                DelegationResult::Delegated { seq: out.seq }
            }
            Err(RuntimeError::Crashed(point)) => {
                sim.transcript.note(format!("owner crashed at {point}; recovering"));
                let rec = sim.recover_owner()?;
                sim.transcript.note(format!("recovered with balance {}", rec.balance));
                let unspent: Vec<u64> = rec.resent.into_iter().filter(|s| !spent.contains_key(s)).collect();
                for &seq in &unspent {
                    spent.insert(seq, sim.run_spend(seq)?);
                }
                if unspent.is_empty() {
                    report.exit_code = 1;
                }
                DelegationResult::Crashed {
                    point,
                    seq: unspent.first().copied(),
                }
            }
            Err(e @ RuntimeError::Enclave(_)) => {
                sim.transcript.note(format!("delegation of {amount} refused: {e}"));
                report.exit_code = 1;
                DelegationResult::Refused { reason: e.to_string() }
            }
            Err(e) => return Err(e),
        };
        report.delegations.push(DelegationLine {
            amount,
            result,
            status: None,
        });
    }
    let height = sim.confirm()?;
    sim.transcript.note(format!("chain confirmed up to height {height}"));
    Ok(())
}

#[cfg(test)]
mod tests;

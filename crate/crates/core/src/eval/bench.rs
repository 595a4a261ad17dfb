//! Mean wall-clock time of each protocol operation.

use std::path::Path;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{derive_address, SigSecretKey, SymCiphertext};
use crate::enclave::delegatee::{self, DelegateeCommand};
use crate::enclave::owner::{self, OwnerCommand};
use crate::enclave::SealedRecord;
use crate::enclave::SessionId;
use crate::hw::{quote_verify, EnclaveHandle};
use crate::runtime::{pair, DelegateeNode, OwnerNode, RuntimeError, SealStore, SimConfig, Simulation};

pub const BENCH_ITERATIONS: usize = 500;

/// Row labels, in table order.
pub const BENCH_OPERATIONS: [&str; 9] = [
    "Enclave initiation",
    "Public key generation (Tx)",
    "Private key generation (Tx)",
    "Address creation",
    "Transaction generation",
    "Remote attestation",
    "State update",
    "State seal",
    "Transaction decryption",
];

/// Published end-to-end delegation time, and the bound checked here after
/// allowing for slower hardware.
pub const DELEGATION_CLAIM_MS: f64 = 25.0;
pub const DELEGATION_BUDGET_MS: f64 = 2.0 * DELEGATION_CLAIM_MS;

const FULL_PATH: &str = "Full delegation path";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub operation: String,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// The nine operation rows in table order.
    pub rows: Vec<BenchRow>,
    /// Owner enclave delegation, durable store write and delegatee
    /// decryption, end to end.
    pub full_delegation: BenchRow,
    pub claim_ms: f64,
    pub budget_ms: f64,
}

impl BenchReport {
    pub fn row(&self, operation: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.operation == operation)
    }

    pub fn within_budget(&self) -> bool {
        self.full_delegation.mean_ms <= self.budget_ms
    }

    /// Tab-separated table with a header line; the last row is the full
    /// delegation path.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("operation\tmean_ms\tstddev_ms\titerations\n");
        for r in self.rows.iter().chain(std::iter::once(&self.full_delegation)) {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\t{}\n", r.operation, r.mean_ms, r.stddev_ms, r.iterations));
        }
        out
    }
}

fn row(operation: &str, samples: &[f64]) -> BenchRow {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    BenchRow {
        operation: operation.to_string(),
        mean_ms: mean,
        stddev_ms: var.sqrt(),
        iterations: samples.len(),
    }
}

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

struct Sampler<'a> {
    iterations: usize,
    samples: Vec<Vec<f64>>,
    scratch: &'a Path,
}

/// Times every operation `iterations` times. Seal-store writes go to files
/// under `scratch`, which are removed afterwards.
pub fn run_bench(iterations: usize, seed: u64, scratch: &Path) -> Result<BenchReport, RuntimeError> {
    let mut s = Sampler {
        iterations,
        samples: vec![Vec::with_capacity(iterations); BENCH_OPERATIONS.len()],
        scratch,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sim = Simulation::new(SimConfig {
        seed,
        ..SimConfig::default()
    })?;
    let hw = sim.hw().clone();

    // Enclave initiation
    for _ in 0..iterations {
        let (hdl, ms) = time(|| hw.load(&hw.pms().clone(), owner::NAME));
        s.samples[0].push(ms);
        hw.destroy(&hdl?);
    }

    // Key generation and address creation
    for _ in 0..iterations {
        let (sk, ms) = time(|| SigSecretKey::random(&mut rng));
        s.samples[2].push(ms);
        let (vk, ms) = time(|| sk.public_key());
        s.samples[1].push(ms);
        let (_, ms) = time(|| derive_address(&vk));
        s.samples[3].push(ms);
    }

    s.enclave_steps(&sim)?;

    // Remote attestation: quote generation plus verification
    for i in 0..iterations {
        let hdl = hw.load(&hw.pms().clone(), owner::NAME)?;
        let cmd = OwnerCommand::InitSetup {
            sid: SessionId([i as u8; 16]),
            vk_sign: sim.delegatee.init().vk_sign,
        };
        let (ok, ms) = time(|| hw.run_quote(&hdl, &cmd.encode()).map(|q| quote_verify(hw.pms(), &q)));
        assert!(ok?, "honest quote verifies");
        s.samples[5].push(ms);
        hw.destroy(&hdl);
    }

    let full = s.full_path(seed)?;
    let rows = BENCH_OPERATIONS
        .iter()
        .zip(&s.samples)
        .map(|(op, samples)| row(op, samples))
        .collect();
    Ok(BenchReport {
        rows,
        full_delegation: row(FULL_PATH, &full),
        claim_ms: DELEGATION_CLAIM_MS,
        budget_ms: DELEGATION_BUDGET_MS,
    })
}

impl Sampler<'_> {
    fn store(&self, name: &str) -> Result<(SealStore, std::path::PathBuf), RuntimeError> {
        let path = self.scratch.join(name);
        let _ = std::fs::remove_file(&path);
        Ok((SealStore::open(&path)?, path))
    }

    /// Transaction generation, state update, state seal (with the durable
    /// write) and transaction decryption, on a paired owner and delegatee.
    fn enclave_steps(&mut self, sim: &Simulation) -> Result<(), RuntimeError> {
        let hw = sim.hw().clone();
        let mut o = OwnerNode::new(hw.clone(), SealStore::memory())?;
        let mut d = DelegateeNode::new(hw.clone(), delegatee::NAME)?;
        let addr = pair(&mut o, &mut d)?;
        let chain = sim.chain().clone();
        chain.deposit(addr, self.iterations as u64 * 2)?;
        chain.advance_blocks(chain.confirmation_depth())?;
        o.notify_deposit(chain.deposit_receipt(&addr))?;
        let hdl = o.handle().expect("owner is up");
        let run = |h: &EnclaveHandle, cmd: OwnerCommand| hw.run(h, &cmd.encode());
        let recipient = d.payout();
        let (mut seal_store, path) = self.store("bench-seal.seal")?;
        let mut cts: Vec<SymCiphertext> = Vec::with_capacity(self.iterations);

        for _ in 0..self.iterations {
            let (r, ms) = time(|| run(&hdl, OwnerCommand::StateUpdate { addr, amount: 1 }));
            r?;
            self.samples[6].push(ms);
            let (r, ms) = time(|| {
                run(
                    &hdl,
                    OwnerCommand::TransactionGeneration {
                        addr,
                        amount: 1,
                        recipient,
                    },
                )
            });
            r?;
            self.samples[4].push(ms);
            cts.push(SymCiphertext::from_bytes(&run(&hdl, OwnerCommand::StartDelegation { addr })?)?);
            let (r, ms) = time(|| -> Result<(), RuntimeError> {
                let frame = run(&hdl, OwnerCommand::StateSeal { addr })?;
                let record = SealedRecord::from_frame(&frame)?;
                seal_store.append_record(&record)?;
                Ok(())
            });
            r?;
            self.samples[7].push(ms);
        }

        let dh = d.handle();
        for ct in cts {
            let cmd = DelegateeCommand::CompleteDelegation { ct_tx: ct };
            let (r, ms) = time(|| hw.run(&dh, &cmd.encode()));
            r?;
            self.samples[8].push(ms);
        }
        hw.destroy(&hdl);
        hw.destroy(&dh);
        drop(seal_store);
        let _ = std::fs::remove_file(path);
        Ok(())
    }

    /// `run_delegation` end to end on a file-backed owner.
    fn full_path(&self, seed: u64) -> Result<Vec<f64>, RuntimeError> {
        let path = self.scratch.join("bench-full.seal");
        let _ = std::fs::remove_file(&path);
        let mut sim = Simulation::new(SimConfig {
            seed,
            store_path: Some(path.clone()),
            ..SimConfig::default()
        })?;
        sim.run_setup()?;
        sim.run_deposit(self.iterations as u64)?;
        let mut out = Vec::with_capacity(self.iterations);
        for _ in 0..self.iterations {
            let (r, ms) = time(|| sim.run_delegation(1));
            r?;
            out.push(ms);
        }
        drop(sim);
        let _ = std::fs::remove_file(path);
        Ok(out)
    }
}

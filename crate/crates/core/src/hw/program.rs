use std::sync::Arc;

use rand_chacha::ChaCha20Rng;

use crate::crypto::{sha256, SymKey};
use crate::enclave::EnclaveError;

use super::{Measurement, PublicParams};

/// A stateful program that can be loaded into an emulated enclave.
pub trait EnclaveProgram: Send {
    /// Handles one command. Must be deterministic given the program state,
    /// the input and the position of the context DRBG.
    fn call(&mut self, ctx: &mut EnclaveContext<'_>, input: &[u8]) -> Result<Vec<u8>, EnclaveError>;

    /// Deep copy of the program state, used for snapshots.
    fn fork(&self) -> Box<dyn EnclaveProgram>;

    /// Digest of the full internal state. Inspection hook for isolation tests.
    fn state_digest(&self) -> [u8; 32];
}

pub type ProgramFactory = dyn Fn() -> Box<dyn EnclaveProgram> + Send + Sync;

/// A registered program: its name, the canonical identifier whose SHA-256
/// is the measurement, and a constructor for fresh instances.
#[derive(Clone)]
pub struct ProgramImage {
    pub name: String,
    pub identifier: Vec<u8>,
    pub factory: Arc<ProgramFactory>,
}

impl ProgramImage {
    pub fn new(
        name: impl Into<String>,
        identifier: Vec<u8>,
        factory: impl Fn() -> Box<dyn EnclaveProgram> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            identifier,
            factory: Arc::new(factory),
        }
    }

    pub fn measurement(&self) -> Measurement {
        Measurement(sha256(&self.identifier))
    }
}

impl std::fmt::Debug for ProgramImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProgramImage")
            .field("name", &self.name)
            .field("measurement", &self.measurement())
            .finish()
    }
}

/// What the hardware exposes to a running program.
pub struct EnclaveContext<'a> {
    handle: u64,
    tag: Measurement,
    pms: &'a PublicParams,
    sealing_key: SymKey,
    rng: &'a mut ChaCha20Rng,
    crash_at: Option<&'static str>,
}

impl<'a> EnclaveContext<'a> {
    pub(crate) fn new(
        handle: u64,
        tag: Measurement,
        pms: &'a PublicParams,
        sealing_key: SymKey,
        rng: &'a mut ChaCha20Rng,
        crash_at: Option<&'static str>,
    ) -> Self {
        Self {
            handle,
            tag,
            pms,
            sealing_key,
            rng,
            crash_at,
        }
    }

    pub fn handle(&self) -> u64 {
        self.handle
    }

    pub fn measurement(&self) -> Measurement {
        self.tag
    }

    /// Attestation parameters of the platform this enclave runs on.
    pub fn pms(&self) -> &PublicParams {
        self.pms
    }

    /// Sealing key bound to this platform and this program's measurement.
    pub fn sealing_key(&self) -> &SymKey {
        &self.sealing_key
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        self.rng
    }

    /// Named crash point. Returns `Crashed` when the host armed this point.
    pub fn checkpoint(&self, name: &'static str) -> Result<(), EnclaveError> {
        match self.crash_at {
            Some(armed) if armed == name => Err(EnclaveError::Crashed(name)),
            _ => Ok(()),
        }
    }
}

/// Minimal reference program: each call returns `sha256(counter ‖ input)`
/// and increments the counter.
#[derive(Debug, Clone, Default)]
pub struct CounterProgram {
    counter: u64,
}

impl CounterProgram {
    pub const NAME: &'static str = "delegacoin/counter";

    pub fn image() -> ProgramImage {
        ProgramImage::new(Self::NAME, b"delegacoin/counter/v1".to_vec(), || {
            Box::new(CounterProgram::default())
        })
    }
}

impl EnclaveProgram for CounterProgram {
    fn call(&mut self, _ctx: &mut EnclaveContext<'_>, input: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        let mut buf = self.counter.to_le_bytes().to_vec();
        buf.extend_from_slice(input);
        self.counter += 1;
        Ok(sha256(&buf).to_vec())
    }

    fn fork(&self) -> Box<dyn EnclaveProgram> {
        Box::new(self.clone())
    }

    fn state_digest(&self) -> [u8; 32] {
        sha256(&self.counter.to_le_bytes())
    }
}

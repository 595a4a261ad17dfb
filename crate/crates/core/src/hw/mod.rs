//! Software emulation of the secure-hardware functionality: setup, program
//! loading with measurement, execution, quoting and quote verification.

mod program;
mod quote;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use hkdf::Hkdf;
use parking_lot::{Mutex, RwLock};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;
use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::crypto::{sig_keygen, sig_sign, CryptoRngCore, SigPublicKey, SigSecretKey, SymKey};
use crate::enclave::EnclaveError;

pub use program::{CounterProgram, EnclaveContext, EnclaveProgram, ProgramFactory, ProgramImage};
pub use quote::{quote_verify, Quote};

/// The only supported security parameter.
pub const SECURITY_PARAM: u32 = 128;
pub const SUITE_ID: &str = "secp256k1-ecdsa-sha256/aes256gcm/ecies-hkdf-sha256";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HwError {
    #[error("unsupported security parameter {0}")]
    UnsupportedParam(u32),
    #[error("unknown program {0:?}")]
    UnknownProgram(String),
    #[error("unknown enclave handle {0}")]
    UnknownHandle(u64),
    #[error("public parameters do not belong to this platform")]
    ParamsMismatch,
    #[error("enclave {handle} crashed at {point}")]
    EnclaveCrashed { handle: u64, point: &'static str },
    #[error("program error {code}: {0}", code = .0.code())]
    Program(EnclaveError),
}

/// 32-byte program measurement `tag_P`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Measurement(pub [u8; 32]);

impl Measurement {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Measurement({})", hex::encode(self.0))
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// Publishable parameters `pms`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub security_param: u32,
    pub vk_quote: SigPublicKey,
    pub suite: String,
}

impl PublicParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.security_param.to_le_bytes())
            .put(self.vk_quote.as_bytes())
            .put(self.suite.as_bytes())
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let security_param = u32::from_le_bytes(d.take_array()?);
        let vk_quote = SigPublicKey::from_bytes(d.take()?)
            .map_err(|_| CodecError::Invalid("attestation key"))?;
        let suite = String::from_utf8(d.take()?.to_vec()).map_err(|_| CodecError::Invalid("suite"))?;
        d.finish()?;
        Ok(Self {
            security_param,
            vk_quote,
            suite,
        })
    }
}

/// Output of `HW.Setup`: the public parameters plus the private quoting key.
#[derive(Clone)]
pub struct HwParams {
    pub pms: PublicParams,
    sk_quote: SigSecretKey,
}

impl HwParams {
    /// The private attestation key. Exposed only so security games can
    /// model a leaked-key platform.
    pub fn leak_quote_key(&self) -> &SigSecretKey {
        &self.sk_quote
    }
}

impl fmt::Debug for HwParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HwParams").field("pms", &self.pms).finish_non_exhaustive()
    }
}

pub fn hw_setup(security_param: u32, rng: &mut (impl CryptoRngCore + ?Sized)) -> Result<HwParams, HwError> {
    if security_param != SECURITY_PARAM {
        return Err(HwError::UnsupportedParam(security_param));
    }
    let kp = sig_keygen(rng);
    Ok(HwParams {
        pms: PublicParams {
            security_param,
            vk_quote: kp.vk,
            suite: SUITE_ID.to_string(),
        },
        sk_quote: kp.sk,
    })
}

/// Host-visible reference to a loaded enclave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnclaveHandle {
    pub id: u64,
    pub tag: Measurement,
}

struct Enclave {
    tag: Measurement,
    program: Box<dyn EnclaveProgram>,
    drbg: ChaCha20Rng,
    crash_at: Option<&'static str>,
}

/// One emulated platform. Shareable across threads; calls into a single
/// enclave are serialized, calls into distinct enclaves run concurrently.
pub struct Hardware {
    params: HwParams,
    seal_root: [u8; 32],
    images: RwLock<HashMap<String, ProgramImage>>,
    enclaves: RwLock<HashMap<u64, Arc<Mutex<Enclave>>>>,
    next_id: AtomicU64,
    seeder: Mutex<ChaCha20Rng>,
}

impl fmt::Debug for Hardware {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hardware")
            .field("pms", &self.params.pms)
            .field("enclaves", &self.enclaves.read().len())
            .finish()
    }
}

impl Hardware {
    /// Runs `HW.Setup` and draws the platform sealing root and DRBG seeder.
    pub fn setup(security_param: u32, rng: &mut (impl CryptoRngCore + ?Sized)) -> Result<Self, HwError> {
        let params = hw_setup(security_param, rng)?;
        Ok(Self::with_params(params, rng))
    }

    pub fn with_params(params: HwParams, rng: &mut (impl CryptoRngCore + ?Sized)) -> Self {
        let mut seal_root = [0u8; 32];
        rng.fill_bytes(&mut seal_root);
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self {
            params,
            seal_root,
            images: RwLock::new(HashMap::new()),
            enclaves: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            seeder: Mutex::new(ChaCha20Rng::from_seed(seed)),
        }
    }

    pub fn pms(&self) -> &PublicParams {
        &self.params.pms
    }

    pub fn params(&self) -> &HwParams {
        &self.params
    }

    /// Registers a program image; re-registering a name replaces it.
    pub fn register(&self, image: ProgramImage) -> Measurement {
        let tag = image.measurement();
        self.images.write().insert(image.name.clone(), image);
        tag
    }

    pub fn measurement_of(&self, name: &str) -> Option<Measurement> {
        self.images.read().get(name).map(ProgramImage::measurement)
    }

    /// `HW.Load`: fresh enclave with fresh state and its own DRBG.
    pub fn load(&self, pms: &PublicParams, program: &str) -> Result<EnclaveHandle, HwError> {
        if pms != &self.params.pms {
            return Err(HwError::ParamsMismatch);
        }
        let image = self
            .images
            .read()
            .get(program)
            .cloned()
            .ok_or_else(|| HwError::UnknownProgram(program.to_string()))?;
        let mut seed = [0u8; 32];
        self.seeder.lock().fill_bytes(&mut seed);
        let tag = image.measurement();
        let enclave = Enclave {
            tag,
            program: (image.factory)(),
            drbg: ChaCha20Rng::from_seed(seed),
            crash_at: None,
        };
        Ok(self.insert(enclave))
    }

    fn insert(&self, enclave: Enclave) -> EnclaveHandle {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let tag = enclave.tag;
        self.enclaves.write().insert(id, Arc::new(Mutex::new(enclave)));
        EnclaveHandle { id, tag }
    }

    fn slot(&self, id: u64) -> Result<Arc<Mutex<Enclave>>, HwError> {
        self.enclaves
            .read()
            .get(&id)
            .cloned()
            .ok_or(HwError::UnknownHandle(id))
    }

    fn sealing_key(&self, tag: &Measurement) -> SymKey {
        let mut key = [0u8; 32];
        Hkdf::<Sha256>::new(Some(b"delegacoin/seal"), &self.seal_root)
            .expand(tag.as_bytes(), &mut key)
            .expect("32 bytes is a valid HKDF length");
        SymKey::from_bytes(key)
    }

    fn execute(&self, id: u64, input: &[u8]) -> Result<(Measurement, Vec<u8>), HwError> {
        let slot = self.slot(id)?;
        let mut guard = slot.lock();
        let enclave = &mut *guard;
        let sealing_key = self.sealing_key(&enclave.tag);
        let mut ctx = EnclaveContext::new(
            id,
            enclave.tag,
            &self.params.pms,
            sealing_key,
            &mut enclave.drbg,
            enclave.crash_at,
        );
        match enclave.program.call(&mut ctx, input) {
            Ok(out) => Ok((enclave.tag, out)),
            Err(EnclaveError::Crashed(point)) => {
                drop(guard);
                self.enclaves.write().remove(&id);
                Err(HwError::EnclaveCrashed { handle: id, point })
            }
            Err(e) => Err(HwError::Program(e)),
        }
    }

    /// `HW.Run`.
    pub fn run(&self, hdl: &EnclaveHandle, input: &[u8]) -> Result<Vec<u8>, HwError> {
        self.execute(hdl.id, input).map(|(_, out)| out)
    }

    /// `HW.RunQuote`: runs, then signs `(hdl ‖ tag_P ‖ in ‖ out)`.
    pub fn run_quote(&self, hdl: &EnclaveHandle, input: &[u8]) -> Result<Quote, HwError> {
        let (tag, output) = self.execute(hdl.id, input)?;
        let sigma = sig_sign(&self.params.sk_quote, &Quote::signed_bytes(hdl.id, &tag, input, &output));
        Ok(Quote {
            handle: hdl.id,
            tag,
            input: input.to_vec(),
            output,
            sigma,
        })
    }

    pub fn destroy(&self, hdl: &EnclaveHandle) -> bool {
        self.enclaves.write().remove(&hdl.id).is_some()
    }

    pub fn is_live(&self, hdl: &EnclaveHandle) -> bool {
        self.enclaves.read().contains_key(&hdl.id)
    }

    /// Snapshot: a new enclave with a copy of the state and DRBG position.
    pub fn fork(&self, hdl: &EnclaveHandle) -> Result<EnclaveHandle, HwError> {
        let copy = {
            let slot = self.slot(hdl.id)?;
            let src = slot.lock();
            Enclave {
                tag: src.tag,
                program: src.program.fork(),
                drbg: src.drbg.clone(),
                crash_at: None,
            }
        };
        Ok(self.insert(copy))
    }

    pub fn state_digest(&self, hdl: &EnclaveHandle) -> Result<[u8; 32], HwError> {
        Ok(self.slot(hdl.id)?.lock().program.state_digest())
    }

    /// Arms a one-shot crash: the next call reaching checkpoint `point`
    /// destroys the enclave and loses its memory.
    pub fn arm_crash(&self, hdl: &EnclaveHandle, point: &'static str) -> Result<(), HwError> {
        self.slot(hdl.id)?.lock().crash_at = Some(point);
        Ok(())
    }

    pub fn disarm_crash(&self, hdl: &EnclaveHandle) -> Result<(), HwError> {
        self.slot(hdl.id)?.lock().crash_at = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn platform(seed: u64) -> Hardware {
        let hw = Hardware::setup(SECURITY_PARAM, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        hw.register(CounterProgram::image());
        hw
    }

    #[test]
    fn setup_rejects_other_params() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(hw_setup(7, &mut rng).err(), Some(HwError::UnsupportedParam(7)));
        let a = hw_setup(128, &mut rng).unwrap();
        let b = hw_setup(128, &mut rng).unwrap();
        assert_ne!(a.pms.vk_quote, b.pms.vk_quote);
        assert_ne!(a.leak_quote_key().expose(), b.leak_quote_key().expose());
    }

    #[test]
    fn load_assigns_distinct_ids_same_tag() {
        let hw = platform(1);
        let a = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        let b = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(a.tag, b.tag);
        assert_eq!(a.tag.0, crate::crypto::sha256(b"delegacoin/counter/v1"));
    }

    #[test]
    fn unknown_program_and_foreign_params_rejected() {
        let hw = platform(2);
        assert_eq!(
            hw.load(hw.pms(), "nope").err(),
            Some(HwError::UnknownProgram("nope".into()))
        );
        let other = platform(3);
        assert_eq!(hw.load(other.pms(), CounterProgram::NAME).err(), Some(HwError::ParamsMismatch));
    }

    #[test]
    fn destroyed_handle_is_unknown() {
        let hw = platform(4);
        let h = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        assert!(hw.destroy(&h));
        assert_eq!(hw.run(&h, b"x").err(), Some(HwError::UnknownHandle(h.id)));
    }

    #[test]
    fn quotes_verify_and_bind_fields() {
        let hw = platform(5);
        let h = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        let q = hw.run_quote(&h, b"input").unwrap();
        assert!(quote_verify(hw.pms(), &q));
        assert_eq!(Quote::from_bytes(&q.to_bytes()).unwrap(), q);

        let mut zeroed = q.clone();
        zeroed.output.iter_mut().for_each(|b| *b = 0);
        assert!(!quote_verify(hw.pms(), &zeroed));

        let other = platform(6);
        assert!(!quote_verify(other.pms(), &q));
    }

    #[test]
    fn every_quote_bit_flip_rejected() {
        let hw = platform(7);
        let h = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        let bytes = hw.run_quote(&h, b"in").unwrap().to_bytes();
        let mut checked = 0;
        for i in 0..bytes.len() * 8 {
            let mut m = bytes.clone();
            m[i / 8] ^= 1 << (i % 8);
            if let Ok(q) = Quote::from_bytes(&m) {
                assert!(!quote_verify(hw.pms(), &q), "bit {i}");
            }
            checked += 1;
        }
        assert!(checked >= 512);
    }

    #[test]
    fn reordered_serialization_rejected() {
        let hw = platform(8);
        let h = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        let q = hw.run_quote(&h, b"in").unwrap();
        // tag before handle id
        let mut bytes = q.tag.as_bytes().to_vec();
        bytes.extend_from_slice(&q.handle.to_le_bytes());
        bytes.extend_from_slice(&q.to_bytes()[40..]);
        let parsed = Quote::from_bytes(&bytes).unwrap();
        assert!(!quote_verify(hw.pms(), &parsed));
        // output before input
        let swapped = Quote {
            input: q.output.clone(),
            output: q.input.clone(),
            ..q.clone()
        };
        assert!(!quote_verify(hw.pms(), &swapped));
    }

    #[test]
    fn fork_replays_identically() {
        let hw = platform(9);
        let h = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        hw.run(&h, b"warm").unwrap();
        let copy = hw.fork(&h).unwrap();
        assert_eq!(hw.run(&h, b"x").unwrap(), hw.run(&copy, b"x").unwrap());
        assert_eq!(hw.state_digest(&h).unwrap(), hw.state_digest(&copy).unwrap());
    }

    #[test]
    fn interleaved_enclaves_are_isolated() {
        let hw = platform(10);
        let a = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        let b = hw.load(hw.pms(), CounterProgram::NAME).unwrap();
        let b_before = hw.state_digest(&b).unwrap();
        for _ in 0..5 {
            hw.run(&a, b"a").unwrap();
        }
        assert_eq!(hw.state_digest(&b).unwrap(), b_before);
        hw.run(&b, b"b").unwrap();
        let a_now = hw.state_digest(&a).unwrap();
        hw.run(&b, b"b").unwrap();
        assert_eq!(hw.state_digest(&a).unwrap(), a_now);
    }

    #[test]
    fn sealing_key_depends_on_measurement() {
        let hw = platform(11);
        let a = hw.sealing_key(&Measurement([1; 32]));
        let b = hw.sealing_key(&Measurement([2; 32]));
        assert_ne!(a, b);
        assert_eq!(a, hw.sealing_key(&Measurement([1; 32])));
    }

    #[test]
    fn pms_encoding_round_trips() {
        let hw = platform(12);
        assert_eq!(&PublicParams::from_bytes(&hw.pms().to_bytes()).unwrap(), hw.pms());
    }
}

//! Delegatee enclave program: session creation, quote-gated provisioning of
//! the delegation key `r`, and decryption of delegated transactions.

use crate::codec::{split_opcode, CodecError, Decoder, Encoder};
use crate::crypto::{
    pke_enc, pke_keygen, se_dec, se_kgen, sha256, sig_keygen, sig_sign, PkeCiphertext, PkeKeypair, PkePublicKey,
    SigKeypair, SigPublicKey, Signature, SymCiphertext, SymKey,
};
use crate::hw::{quote_verify, EnclaveContext, EnclaveProgram, Measurement, ProgramImage, PublicParams, Quote};

use super::owner::InitSetupOutput;
use super::{provision_signing_bytes, EnclaveError, SessionId, Transaction};

pub const NAME: &str = "delegacoin/delegatee";
const IDENTIFIER: &[u8] = b"delegacoin/delegatee/v1";

mod op {
    pub const INIT_SETUP: u8 = 0x21;
    pub const PROVISION: u8 = 0x22;
    pub const COMPLETE_DELEGATION: u8 = 0x23;
}

/// Which quote checks `provision` performs. Production images enable both;
/// the weakened variants exist so tests can show each check is necessary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProvisionChecks {
    pub measurement: bool,
    pub signature: bool,
}

impl ProvisionChecks {
    pub const ALL: Self = Self {
        measurement: true,
        signature: true,
    };
}

impl Default for ProvisionChecks {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelegateeCommand {
    InitSetup,
    Provision {
        quote: Quote,
        pk_o: PkePublicKey,
        pms: PublicParams,
    },
    CompleteDelegation {
        ct_tx: SymCiphertext,
    },
}

impl DelegateeCommand {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Self::InitSetup => vec![op::INIT_SETUP],
            Self::Provision { quote, pk_o, pms } => Encoder::with_opcode(op::PROVISION)
                .put(&quote.to_bytes())
                .put(pk_o.as_bytes())
                .put(&pms.to_bytes())
                .finish(),
            Self::CompleteDelegation { ct_tx } => Encoder::with_opcode(op::COMPLETE_DELEGATION)
                .put(&ct_tx.to_bytes())
                .finish(),
        }
    }

    pub fn decode(input: &[u8]) -> Result<Self, EnclaveError> {
        let (opcode, args) = split_opcode(input)?;
        let mut d = Decoder::new(args);
        let cmd = match opcode {
            op::INIT_SETUP => Self::InitSetup,
            op::PROVISION => Self::Provision {
                quote: Quote::from_bytes(d.take()?)?,
                pk_o: PkePublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("pk_O"))?,
                pms: PublicParams::from_bytes(d.take()?)?,
            },
            op::COMPLETE_DELEGATION => Self::CompleteDelegation {
                ct_tx: SymCiphertext::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("ct_tx"))?,
            },
            other => return Err(EnclaveError::UnknownCommand(other)),
        };
        d.finish()?;
        Ok(cmd)
    }
}

/// Output of the delegatee's "init setup": `(sid, pk_D, vk_sign)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelegateeInitOutput {
    pub sid: SessionId,
    pub pk_d: PkePublicKey,
    pub vk_sign: SigPublicKey,
}

impl DelegateeInitOutput {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.sid.0)
            .put(self.pk_d.as_bytes())
            .put(self.vk_sign.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            sid: SessionId(d.take_array()?),
            pk_d: PkePublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("pk_D"))?,
            vk_sign: SigPublicKey::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("vk_sign"))?,
        };
        d.finish()?;
        Ok(out)
    }
}

/// `(sid, ct_r, σ_r)` sent back to the owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvisionMessage {
    pub sid: SessionId,
    pub ct_r: PkeCiphertext,
    pub sigma_r: Signature,
}

impl ProvisionMessage {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .put(&self.sid.0)
            .put(&self.ct_r.to_bytes())
            .put(self.sigma_r.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let out = Self {
            sid: SessionId(d.take_array()?),
            ct_r: PkeCiphertext::from_bytes(d.take()?).map_err(|_| CodecError::Invalid("ct_r"))?,
            sigma_r: Signature(d.take_array()?),
        };
        d.finish()?;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct DelegateeState {
    pke: PkeKeypair,
    sign: SigKeypair,
    sid: SessionId,
    r: Option<SymKey>,
}

/// Delegatee program `P_D`. The owner program's measurement is fixed when the
/// image is built and is part of this program's own identity.
#[derive(Debug, Clone)]
pub struct DelegateeProgram {
    expected_owner_tag: Measurement,
    checks: ProvisionChecks,
    state: Option<DelegateeState>,
}

impl DelegateeProgram {
    pub fn new(expected_owner_tag: Measurement, checks: ProvisionChecks) -> Self {
        Self {
            expected_owner_tag,
            checks,
            state: None,
        }
    }

    pub fn identifier(expected_owner_tag: &Measurement, checks: ProvisionChecks) -> Vec<u8> {
        let mut id = IDENTIFIER.to_vec();
        id.extend_from_slice(expected_owner_tag.as_bytes());
        id.push(checks.measurement as u8);
        id.push(checks.signature as u8);
        id
    }

    pub fn image(expected_owner_tag: Measurement) -> ProgramImage {
        Self::image_with(NAME, expected_owner_tag, ProvisionChecks::ALL)
    }

    /// Image under a custom registry name, possibly with checks disabled.
    pub fn image_with(name: &str, expected_owner_tag: Measurement, checks: ProvisionChecks) -> ProgramImage {
        ProgramImage::new(name, Self::identifier(&expected_owner_tag, checks), move || {
            Box::new(DelegateeProgram::new(expected_owner_tag, checks))
        })
    }

    fn provision(
        &mut self,
        ctx: &mut EnclaveContext<'_>,
        quote: Quote,
        pk_o: PkePublicKey,
        pms: PublicParams,
    ) -> Result<ProvisionMessage, EnclaveError> {
        let st = self.state.as_mut().ok_or(EnclaveError::NotInitialized)?;
        if st.r.is_some() {
            return Err(EnclaveError::AlreadyProvisioned);
        }
        if self.checks.measurement && quote.tag != self.expected_owner_tag {
            return Err(EnclaveError::WrongMeasurement);
        }
        // Attestation is only meaningful against the platform this enclave
        // trusts, not whatever parameters the host passes in.
        if self.checks.signature && (&pms != ctx.pms() || !quote_verify(&pms, &quote)) {
            return Err(EnclaveError::BadQuote);
        }
        let out = InitSetupOutput::decode(&quote.output).map_err(|_| EnclaveError::SessionMismatch)?;
        if out.sid != st.sid || out.vk_sign != st.sign.vk || out.pk_o != pk_o {
            return Err(EnclaveError::SessionMismatch);
        }
        let r = se_kgen(ctx.rng());
        let ct_r = pke_enc(ctx.rng(), &pk_o, r.as_bytes());
        let sigma_r = sig_sign(&st.sign.sk, &provision_signing_bytes(&st.sid, &ct_r.to_bytes()));
        st.r = Some(r);
        Ok(ProvisionMessage {
            sid: st.sid,
            ct_r,
            sigma_r,
        })
    }
}

impl EnclaveProgram for DelegateeProgram {
    fn call(&mut self, ctx: &mut EnclaveContext<'_>, input: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        match DelegateeCommand::decode(input)? {
            DelegateeCommand::InitSetup => {
                if self.state.is_some() {
                    return Err(EnclaveError::AlreadyInitialized);
                }
                let mut sid = [0u8; 16];
                rand_chacha::rand_core::RngCore::fill_bytes(ctx.rng(), &mut sid);
                let st = DelegateeState {
                    pke: pke_keygen(ctx.rng()),
                    sign: sig_keygen(ctx.rng()),
                    sid: SessionId(sid),
                    r: None,
                };
                let out = DelegateeInitOutput {
                    sid: st.sid,
                    pk_d: st.pke.pk,
                    vk_sign: st.sign.vk,
                };
                self.state = Some(st);
                Ok(out.encode())
            }
            DelegateeCommand::Provision { quote, pk_o, pms } => Ok(self.provision(ctx, quote, pk_o, pms)?.encode()),
            DelegateeCommand::CompleteDelegation { ct_tx } => {
                let st = self.state.as_ref().ok_or(EnclaveError::NotInitialized)?;
                let r = st.r.as_ref().ok_or(EnclaveError::NoKey)?;
                let plain = se_dec(r, &ct_tx).map_err(|_| EnclaveError::IntegrityFailure)?;
                let tx = Transaction::from_bytes(&plain).map_err(|_| EnclaveError::MalformedTx)?;
                if !tx.verify_signature() {
                    return Err(EnclaveError::MalformedTx);
                }
                Ok(plain)
            }
        }
    }

    fn fork(&self) -> Box<dyn EnclaveProgram> {
        Box::new(self.clone())
    }

    fn state_digest(&self) -> [u8; 32] {
        let Some(st) = &self.state else {
            return sha256(b"delegatee/uninitialized");
        };
        let bytes = Encoder::new()
            .put(&st.pke.sk.expose())
            .put(&st.sign.sk.expose())
            .put(&st.sid.0)
            .put_opt(st.r.as_ref().map(|r| &r.as_bytes()[..]))
            .finish();
        sha256(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_address, se_enc};
    use crate::enclave::owner::{OwnerCommand, OwnerProgram};
    use crate::enclave::TxMetadata;
    use crate::hw::{Hardware, HwError};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Setup {
        hw: Hardware,
        owner_tag: Measurement,
        rng: ChaCha20Rng,
    }

    fn platform(seed: u64) -> Setup {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let hw = Hardware::setup(128, &mut rng).unwrap();
        let chain = sig_keygen(&mut rng);
        let owner_tag = hw.register(OwnerProgram::image(chain.vk));
        hw.register(DelegateeProgram::image(owner_tag));
        Setup { hw, owner_tag, rng }
    }

    fn run<T>(hw: &Hardware, h: &crate::hw::EnclaveHandle, cmd: &[u8], dec: fn(&[u8]) -> Result<T, CodecError>) -> T {
        dec(&hw.run(h, cmd).unwrap()).unwrap()
    }

    /// Delegatee init and owner quote; returns the provision command inputs.
    fn exchange(
        s: &Setup,
        delegatee: &str,
    ) -> (crate::hw::EnclaveHandle, crate::hw::EnclaveHandle, DelegateeInitOutput, Quote, PkePublicKey) {
        let pms = s.hw.pms().clone();
        let d = s.hw.load(&pms, delegatee).unwrap();
        let o = s.hw.load(&pms, crate::enclave::owner::NAME).unwrap();
        let init = run(&s.hw, &d, &DelegateeCommand::InitSetup.encode(), DelegateeInitOutput::decode);
        let quote = s
            .hw
            .run_quote(
                &o,
                &OwnerCommand::InitSetup {
                    sid: init.sid,
                    vk_sign: init.vk_sign,
                }
                .encode(),
            )
            .unwrap();
        let pk_o = InitSetupOutput::decode(&quote.output).unwrap().pk_o;
        (d, o, init, quote, pk_o)
    }

    fn provision(s: &Setup, d: &crate::hw::EnclaveHandle, quote: Quote, pk_o: PkePublicKey) -> Result<Vec<u8>, HwError> {
        s.hw.run(
            d,
            &DelegateeCommand::Provision {
                quote,
                pk_o,
                pms: s.hw.pms().clone(),
            }
            .encode(),
        )
    }

    fn program_err(e: Result<Vec<u8>, HwError>) -> EnclaveError {
        match e {
            Err(HwError::Program(p)) => p,
            other => panic!("expected program error, got {other:?}"),
        }
    }

    #[test]
    fn init_setup_once_and_distinct_sessions() {
        let s = platform(1);
        let pms = s.hw.pms().clone();
        let a = s.hw.load(&pms, NAME).unwrap();
        let b = s.hw.load(&pms, NAME).unwrap();
        let ia = run(&s.hw, &a, &DelegateeCommand::InitSetup.encode(), DelegateeInitOutput::decode);
        let ib = run(&s.hw, &b, &DelegateeCommand::InitSetup.encode(), DelegateeInitOutput::decode);
        assert_ne!(ia.sid, ib.sid);
        assert_eq!(
            program_err(s.hw.run(&a, &DelegateeCommand::InitSetup.encode())),
            EnclaveError::AlreadyInitialized
        );
    }

    #[test]
    fn honest_provision_signs_under_vk_sign() {
        let s = platform(2);
        let (d, _, init, quote, pk_o) = exchange(&s, NAME);
        let msg = ProvisionMessage::decode(&provision(&s, &d, quote.clone(), pk_o).unwrap()).unwrap();
        assert_eq!(msg.sid, init.sid);
        assert!(crate::crypto::sig_verify(
            &init.vk_sign,
            &msg.sigma_r,
            &provision_signing_bytes(&msg.sid, &msg.ct_r.to_bytes())
        ));
        assert_eq!(program_err(provision(&s, &d, quote, pk_o)), EnclaveError::AlreadyProvisioned);
    }

    #[test]
    fn quote_from_other_program_is_wrong_measurement() {
        let s = platform(3);
        let pms = s.hw.pms().clone();
        let (d, _, _, _, pk_o) = exchange(&s, NAME);
        let other = s.hw.load(&pms, NAME).unwrap();
        let q = s.hw.run_quote(&other, &DelegateeCommand::InitSetup.encode()).unwrap();
        assert_eq!(program_err(provision(&s, &d, q, pk_o)), EnclaveError::WrongMeasurement);
    }

    #[test]
    fn every_signature_bit_flip_is_bad_quote() {
        let s = platform(4);
        let (d, _, _, quote, pk_o) = exchange(&s, NAME);
        for bit in 0..512 {
            let mut q = quote.clone();
            q.sigma.0[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(program_err(provision(&s, &d, q, pk_o)), EnclaveError::BadQuote, "bit {bit}");
        }
        provision(&s, &d, quote, pk_o).unwrap();
    }

    #[test]
    fn foreign_platform_parameters_rejected() {
        let mut s = platform(5);
        let (d, _, _, quote, pk_o) = exchange(&s, NAME);
        let foreign = crate::hw::hw_setup(128, &mut s.rng).unwrap();
        let forged = Quote {
            sigma: sig_sign(foreign.leak_quote_key(), &quote.body()),
            ..quote
        };
        let cmd = DelegateeCommand::Provision {
            quote: forged,
            pk_o,
            pms: foreign.pms,
        };
        assert_eq!(program_err(s.hw.run(&d, &cmd.encode())), EnclaveError::BadQuote);
    }

    #[test]
    fn quote_for_another_session_rejected() {
        let s = platform(6);
        let (d1, _, _, _, _) = exchange(&s, NAME);
        let (_, _, _, quote2, pk_o2) = exchange(&s, NAME);
        assert_eq!(program_err(provision(&s, &d1, quote2, pk_o2)), EnclaveError::SessionMismatch);

        let (d, _, _, quote, _) = exchange(&s, NAME);
        let other_pk = pke_keygen(&mut ChaCha20Rng::seed_from_u64(9)).pk;
        assert_eq!(program_err(provision(&s, &d, quote, other_pk)), EnclaveError::SessionMismatch);
    }

    #[test]
    fn each_check_is_necessary() {
        let s = platform(7);
        let no_meas = "test/delegatee-no-measurement";
        let no_sig = "test/delegatee-no-signature";
        s.hw.register(DelegateeProgram::image_with(
            no_meas,
            s.owner_tag,
            ProvisionChecks {
                measurement: false,
                signature: true,
            },
        ));
        s.hw.register(DelegateeProgram::image_with(
            no_sig,
            s.owner_tag,
            ProvisionChecks {
                measurement: true,
                signature: false,
            },
        ));

        // A quote carrying the owner's output but issued for a different
        // program, with a genuine platform signature.
        let pms = s.hw.pms().clone();
        let (d, _, _, honest, pk_o) = exchange(&s, no_meas);
        let other = s.hw.load(&pms, NAME).unwrap();
        let mut q = s.hw.run_quote(&other, &DelegateeCommand::InitSetup.encode()).unwrap();
        q.output = honest.output.clone();
        q.sigma = sig_sign(s.hw.params().leak_quote_key(), &q.body());
        assert_ne!(q.tag, s.owner_tag);
        assert!(provision(&s, &d, q.clone(), pk_o).is_ok(), "weakened image accepts wrong program");

        let (d_full, _, _, honest_full, pk_full) = exchange(&s, NAME);
        let mut q_full = q.clone();
        q_full.output = honest_full.output.clone();
        q_full.sigma = sig_sign(s.hw.params().leak_quote_key(), &q_full.body());
        assert_eq!(program_err(provision(&s, &d_full, q_full, pk_full)), EnclaveError::WrongMeasurement);

        // Unsigned quote claiming the right measurement.
        let (d, _, _, honest, pk_o) = exchange(&s, no_sig);
        let mut unsigned = honest.clone();
        unsigned.sigma = Signature([0; 64]);
        assert!(provision(&s, &d, unsigned.clone(), pk_o).is_ok(), "weakened image accepts bad signature");
        let (d_full, _, _, honest_full, pk_full) = exchange(&s, NAME);
        let unsigned_full = Quote {
            sigma: Signature([0; 64]),
            ..honest_full
        };
        assert_eq!(program_err(provision(&s, &d_full, unsigned_full, pk_full)), EnclaveError::BadQuote);
    }

    #[test]
    fn complete_delegation_paths() {
        let mut s = platform(8);
        let (d, _, _, quote, pk_o) = exchange(&s, NAME);
        let junk_key = se_kgen(&mut s.rng);
        let ct = se_enc(&mut s.rng, &junk_key, b"junk");
        assert_eq!(
            program_err(s.hw.run(&d, &DelegateeCommand::CompleteDelegation { ct_tx: ct.clone() }.encode())),
            EnclaveError::NoKey
        );
        provision(&s, &d, quote, pk_o).unwrap();
        assert_eq!(
            program_err(s.hw.run(&d, &DelegateeCommand::CompleteDelegation { ct_tx: ct }.encode())),
            EnclaveError::IntegrityFailure
        );
    }

    #[test]
    fn decrypts_well_formed_transactions_only() {
        // Program driven directly so the test knows r.
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut program = DelegateeProgram::new(Measurement::default(), ProvisionChecks::ALL);
        let r = se_kgen(&mut rng);
        program.state = Some(DelegateeState {
            pke: pke_keygen(&mut rng),
            sign: sig_keygen(&mut rng),
            sid: SessionId([1; 16]),
            r: Some(r.clone()),
        });
        let params = crate::hw::hw_setup(128, &mut rng).unwrap();
        let seal = se_kgen(&mut rng);
        let kp = sig_keygen(&mut rng);
        let tx = Transaction::sign(
            &kp.sk,
            derive_address(&kp.vk),
            TxMetadata {
                recipient: derive_address(&kp.vk),
                amount: 200,
                nonce: [3; 8],
            },
        );
        let call = |program: &mut DelegateeProgram, ct: SymCiphertext, rng: &mut ChaCha20Rng| {
            let mut ctx = EnclaveContext::new(1, Measurement::default(), &params.pms, seal.clone(), rng, None);
            program.call(&mut ctx, &DelegateeCommand::CompleteDelegation { ct_tx: ct }.encode())
        };
        let ct = se_enc(&mut rng, &r, &tx.to_bytes());
        assert_eq!(call(&mut program, ct.clone(), &mut rng).unwrap(), tx.to_bytes());

        let bytes = ct.to_bytes();
        for i in 0..bytes.len() {
            let mut m = bytes.clone();
            m[i] ^= 0x01;
            let mutated = SymCiphertext::from_bytes(&m).unwrap();
            assert_eq!(call(&mut program, mutated, &mut rng), Err(EnclaveError::IntegrityFailure));
        }

        let short = se_enc(&mut rng, &r, b"not a transaction");
        assert_eq!(call(&mut program, short, &mut rng), Err(EnclaveError::MalformedTx));
        let mut bad_sig = tx.to_bytes();
        bad_sig[120] ^= 1;
        let forged = se_enc(&mut rng, &r, &bad_sig);
        assert_eq!(call(&mut program, forged, &mut rng), Err(EnclaveError::MalformedTx));
    }
}

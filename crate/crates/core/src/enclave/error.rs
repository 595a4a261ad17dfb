use thiserror::Error;

use crate::codec::CodecError;
use crate::crypto::CryptoError;

/// Failure reported by an enclave command handler (the protocol's `⊥`).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnclaveError {
    #[error("enclave already initialized")]
    AlreadyInitialized,
    #[error("enclave not initialized")]
    NotInitialized,
    #[error("unknown session")]
    UnknownSession,
    #[error("signature verification failed")]
    BadSignature,
    #[error("public-key decryption failed")]
    DecryptFailure,
    #[error("sealed or encrypted data failed integrity check")]
    IntegrityFailure,
    #[error("address already generated")]
    AlreadyGenerated,
    #[error("no address generated")]
    NoAddress,
    #[error("address does not belong to this enclave")]
    AddressMismatch,
    #[error("insufficient balance: have {balance}, need {requested}")]
    InsufficientBalance { balance: u64, requested: u64 },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("a delegation is already in progress")]
    DelegationPending,
    #[error("no provision key")]
    NoProvisionKey,
    #[error("no pending transaction")]
    NoPendingTx,
    #[error("no balance update pending for this amount")]
    NoPendingUpdate,
    #[error("sealed record is older than the loaded state")]
    StaleRecord,
    #[error("deposit receipt rejected")]
    BadReceipt,
    #[error("quote measurement does not match the expected program")]
    WrongMeasurement,
    #[error("quote verification failed")]
    BadQuote,
    #[error("quote does not belong to this session")]
    SessionMismatch,
    #[error("key already provisioned")]
    AlreadyProvisioned,
    #[error("no delegation key")]
    NoKey,
    #[error("malformed transaction")]
    MalformedTx,
    #[error("unknown command opcode {0:#04x}")]
    UnknownCommand(u8),
    #[error("malformed command: {0}")]
    MalformedCommand(#[from] CodecError),
    #[error("enclave crashed at {0}")]
    Crashed(&'static str),
}

impl EnclaveError {
    /// Stable numeric code, as carried across the host boundary.
    pub fn code(&self) -> u16 {
        match self {
            Self::AlreadyInitialized => 1,
            Self::NotInitialized => 2,
            Self::UnknownSession => 3,
            Self::BadSignature => 4,
            Self::DecryptFailure => 5,
            Self::IntegrityFailure => 6,
            Self::AlreadyGenerated => 7,
            Self::NoAddress => 8,
            Self::AddressMismatch => 9,
            Self::InsufficientBalance { .. } => 10,
            Self::ZeroAmount => 11,
            Self::DelegationPending => 12,
            Self::NoProvisionKey => 13,
            Self::NoPendingTx => 14,
            Self::StaleRecord => 15,
            Self::BadReceipt => 16,
            Self::WrongMeasurement => 17,
            Self::BadQuote => 18,
            Self::SessionMismatch => 19,
            Self::AlreadyProvisioned => 20,
            Self::NoKey => 21,
            Self::MalformedTx => 22,
            Self::UnknownCommand(_) => 23,
            Self::MalformedCommand(_) => 24,
            Self::Crashed(_) => 25,
            Self::NoPendingUpdate => 26,
        }
    }
}

impl From<CryptoError> for EnclaveError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::DecryptFailure => Self::DecryptFailure,
            CryptoError::IntegrityFailure | CryptoError::MalformedCiphertext => Self::IntegrityFailure,
            CryptoError::InvalidKey | CryptoError::InvalidAddress(_) => {
                Self::MalformedCommand(CodecError::Invalid("key or address encoding"))
            }
        }
    }
}

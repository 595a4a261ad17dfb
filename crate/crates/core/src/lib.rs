pub mod api;
pub mod chain;
pub mod codec;
pub mod crypto;
pub mod eval;
pub mod enclave;
pub mod hw;
pub mod harness;
pub mod runtime;

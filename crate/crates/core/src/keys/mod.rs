//! Shared secret key material and its lifecycle.

mod bits;
mod blocks;
mod mac;
mod qke;
mod store;

pub use bits::{BitString, HexError};
pub use blocks::{BlockKeySet, BlockState};
pub use mac::{gf64_mul, mac_sign, mac_verify, poly_hash, AuthKeyPool, MacTag, MAC_KEY_BITS};
pub use qke::{
    AbortCause, ClassicalChannel, Eavesdrop, HonestChannel, QkeOutput, QkeParams, QkeSession, QkeStatus,
    TamperingChannel,
};
pub use store::{key_index, KeyStore, RoundState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key material exhausted: need bit {needed}, only {available} available")]
    Depleted { needed: u64, available: u64 },
    #[error("round {0} is burned; release refused")]
    Refused(u64),
    #[error("invalid station index {0}")]
    BadStation(usize),
}

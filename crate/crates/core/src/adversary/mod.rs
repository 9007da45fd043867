//! The spoofing adversary: what she may know where and when, what she may
//! do, and the concrete attacks against the tagging protocol.
//!
//! Eve is modelled as present everywhere outside the stations and the tag.
//! Rather than tracking her physical relays, an information ledger records
//! where and when every protocol datum first became observable, and every
//! injected message is checked against the light cones of the data it uses.

mod capabilities;
mod ledger;
mod outcome;
mod strategies;
mod strategy;

pub use capabilities::{AdversaryCapabilities, CapabilityViolation, SecurityScenario};
pub use ledger::{validate_injection, CausalityViolation, DatumId, InfoLedger};
pub use outcome::{
    attack_guess_spoofer, attack_input_injection, attack_off_tag_precompute, attack_relocation,
    exact_spoof_probability, SpoofOutcome,
};
pub use strategies::{
    FtlProbe, GuessSpoofer, OffTagPrecompute, OutsideResponder, Passive, RelayMode, Relocation, StrategySpec,
};
pub use strategy::{Action, AdversaryCtx, Injection, Observation, Strategy, Target};

//! Deterministic discrete-event simulation of one tagging session, its
//! replayable trace, and seeded Monte Carlo over many sessions.
//!
//! Events pop in order of (time, actor, sequence number). All randomness in
//! a run comes from one ChaCha8 stream seeded by the run's 64-bit seed.

mod replay;
mod rng;
mod scenario;
mod sim;
mod trace;
mod trials;

pub use replay::{audit, replay, AuditViolation, Divergence, ReplayReport};
pub use rng::{splitmix64, trial_seed, CountingRng};
pub use scenario::{AdversaryConfig, FieldError, KeyConfig, Scenario};
pub use sim::{run, run_with, QkeSummary, RunOptions, RunOutcome};
pub use trace::{
    ActorId, DropReason, TagOutcome, Trace, TraceError, TraceHeader, TraceKind, TraceRecord, TRACE_FORMAT,
    TRACE_VERSION,
};
pub use trials::{run_trials, TrialSummary};

use thiserror::Error;

use crate::adversary::{CapabilityViolation, CausalityViolation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", join(.0))]
    Invalid(Vec<FieldError>),
    #[error("causality violation: {0}")]
    Causality(#[from] CausalityViolation),
    #[error("capability violation: {0}")]
    Capability(#[from] CapabilityViolation),
    #[error("key provisioning failed: {0}")]
    KeyStarvation(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

fn join(errs: &[FieldError]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl SimError {
    /// An adversary or engine broke a rule the model guarantees, as opposed
    /// to a bad configuration.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            SimError::Causality(_) | SimError::Capability(_) | SimError::Invariant(_)
        )
    }
}

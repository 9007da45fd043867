use rand::RngCore;

use super::{DatumId, InfoLedger};
use crate::protocol::{Message, ProtocolConfig};
use crate::spacetime::{Geometry, Position, SpacetimeEvent};
use crate::time::ExactTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Tag,
    Station(u8),
}

/// A message Eve emits at `emit`, aimed at `target`.
///
/// `refs` lists every protocol datum the content depends on; anything else
/// in the message must be Eve's own randomness.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub emit: SpacetimeEvent,
    pub message: Message,
    pub target: Target,
    pub refs: Vec<DatumId>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Inject(Injection),
    /// Move the tag to `to`, arriving at `at`; `enclose` seals its inputs
    /// and outputs inside Eve's region.
    Relocate {
        at: ExactTime,
        to: Position,
        enclose: bool,
    },
    /// Discard deliveries to `target` until `until`.
    Jam {
        target: Target,
        until: ExactTime,
    },
    Wake {
        at: ExactTime,
        token: u64,
    },
}

/// An honest emission as Eve sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub datum: DatumId,
    pub origin: SpacetimeEvent,
    pub message: Message,
}

/// Eve's view of the world during one callback.
pub struct AdversaryCtx<'a> {
    pub now: ExactTime,
    pub geom: &'a Geometry,
    pub cfg: &'a ProtocolConfig,
    pub ledger: &'a InfoLedger,
    /// Where the tag physically is right now.
    pub tag_position: Position,
    rng: &'a mut dyn RngCore,
    actions: Vec<Action>,
}

impl<'a> AdversaryCtx<'a> {
    pub fn new(
        now: ExactTime,
        geom: &'a Geometry,
        cfg: &'a ProtocolConfig,
        ledger: &'a InfoLedger,
        tag_position: Position,
        rng: &'a mut dyn RngCore,
    ) -> Self {
        AdversaryCtx {
            now,
            geom,
            cfg,
            ledger,
            tag_position,
            rng,
            actions: Vec::new(),
        }
    }

    pub fn rng(&mut self) -> &mut dyn RngCore {
        self.rng
    }

    pub fn coin(&mut self) -> bool {
        self.rng.next_u32() & 1 == 1
    }

    pub fn inject(&mut self, injection: Injection) {
        self.actions.push(Action::Inject(injection));
    }

    pub fn relocate_tag(&mut self, at: ExactTime, to: Position, enclose: bool) {
        self.actions.push(Action::Relocate { at, to, enclose });
    }

    pub fn jam(&mut self, target: Target, until: ExactTime) {
        self.actions.push(Action::Jam { target, until });
    }

    pub fn wake_at(&mut self, at: ExactTime, token: u64) {
        self.actions.push(Action::Wake { at, token });
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.actions
    }
}

/// An adversary strategy driven by engine callbacks in causal order.
///
/// Callbacks only request actions; the engine checks each one against the
/// ledger's light cones and the capability set before it takes effect.
pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    /// Whether the tag stays switched on for the session.
    fn tag_powered(&self) -> bool {
        true
    }

    fn start(&mut self, _ctx: &mut AdversaryCtx<'_>) {}

    fn observe(&mut self, _obs: &Observation, _ctx: &mut AdversaryCtx<'_>) {}

    fn wake(&mut self, _token: u64, _ctx: &mut AdversaryCtx<'_>) {}
}

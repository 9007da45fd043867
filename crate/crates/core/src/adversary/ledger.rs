use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spacetime::{Geometry, SpacetimeEvent};
use crate::time::ExactTime;

/// A protocol datum whose availability the ledger tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "datum", rename_all = "snake_case")]
pub enum DatumId {
    /// `a_i` (station 0) or `b_i` (station 1).
    Challenge {
        station: u8,
        round: u64,
    },
    /// The key bit released for round `i`.
    Response {
        round: u64,
    },
    Request {
        station: u8,
        block: u64,
    },
    Answer {
        station: u8,
        block: u64,
    },
}

impl fmt::Display for DatumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatumId::Challenge { station: 0, round } => write!(f, "a_{round}"),
            DatumId::Challenge { station: 1, round } => write!(f, "b_{round}"),
            DatumId::Challenge { station, round } => write!(f, "challenge_{station}_{round}"),
            DatumId::Response { round } => write!(f, "response_{round}"),
            DatumId::Request { station, block } => write!(f, "request_{station}_{block}"),
            DatumId::Answer { station, block } => write!(f, "answer_{station}_{block}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CausalityViolation {
    #[error("{datum} used at t={at} but only reachable there from t={earliest} (deficit {deficit})")]
    OutsideLightCone {
        datum: DatumId,
        at: ExactTime,
        earliest: ExactTime,
        deficit: ExactTime,
    },
    #[error("{datum} used before it was ever emitted")]
    NotYetEmitted { datum: DatumId },
    #[error("action scheduled at t={at}, in the past of now t={now}")]
    InThePast { at: ExactTime, now: ExactTime },
}

/// Where and when each datum first became observable outside private state.
///
/// Secret key material never appears here; only emitted messages do.
#[derive(Clone, Debug, Default)]
pub struct InfoLedger {
    origins: BTreeMap<DatumId, SpacetimeEvent>,
    order: Vec<DatumId>,
}

impl InfoLedger {
    pub fn new() -> Self {
        InfoLedger::default()
    }

    /// Records an emission; the earliest origin of a datum is kept.
    pub fn record(&mut self, datum: DatumId, origin: SpacetimeEvent) {
        match self.origins.get_mut(&datum) {
            Some(prev) if prev.t <= origin.t => {}
            Some(prev) => *prev = origin,
            None => {
                self.origins.insert(datum, origin);
                self.order.push(datum);
            }
        }
    }

    pub fn origin(&self, datum: &DatumId) -> Option<&SpacetimeEvent> {
        self.origins.get(datum)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Entries in first-recorded order.
    pub fn entries(&self) -> impl Iterator<Item = (DatumId, SpacetimeEvent)> + '_ {
        self.order.iter().map(|d| (*d, self.origins[d]))
    }

    /// Earliest time `datum` is available at the place of `at`.
    pub fn available_at(&self, datum: &DatumId, at: &SpacetimeEvent, geom: &Geometry) -> Option<ExactTime> {
        self.origins.get(datum).map(|o| o.t + geom.delay(&o.x, &at.x))
    }
}

/// Accepts an injection at `emit` iff every referenced datum's origin lies
/// in the past light cone of `emit`. Adversary-local randomness needs no
/// reference and is always available.
pub fn validate_injection(
    refs: &[DatumId],
    emit: &SpacetimeEvent,
    ledger: &InfoLedger,
    geom: &Geometry,
) -> Result<(), CausalityViolation> {
    for datum in refs {
        let earliest = ledger
            .available_at(datum, emit, geom)
            .ok_or(CausalityViolation::NotYetEmitted { datum: *datum })?;
        if emit.t < earliest {
            return Err(CausalityViolation::OutsideLightCone {
                datum: *datum,
                at: emit.t,
                earliest,
                deficit: earliest - emit.t,
            });
        }
    }
    Ok(())
}

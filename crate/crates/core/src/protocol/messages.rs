use serde::{Deserialize, Serialize};

use crate::keys::{MacTag, MAC_KEY_BITS};
use crate::spacetime::SpacetimeEvent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u8);

impl StationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Challenge bit `a_i` (station 0) or `b_i` (station 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChallengeMessage {
    pub round: u64,
    pub bit: bool,
    pub origin: StationId,
    pub sent: SpacetimeEvent,
    pub mac: Option<MacTag>,
}

/// The tag's key bit for one round, addressed to one station.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseMessage {
    pub round: u64,
    pub bit: bool,
    pub emitted: SpacetimeEvent,
    pub destination: StationId,
    pub mac: Option<MacTag>,
}

/// A station's request for one bit of one block of its sub-key.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRequest {
    pub station: StationId,
    pub block: u64,
    pub which: bool,
    pub sent: SpacetimeEvent,
    pub mac: Option<MacTag>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockResponse {
    pub station: StationId,
    pub block: u64,
    pub bit: bool,
    pub emitted: SpacetimeEvent,
    pub mac: Option<MacTag>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Challenge(ChallengeMessage),
    Response(ResponseMessage),
    BlockRequest(BlockRequest),
    BlockResponse(BlockResponse),
}

// MAC payloads cover content, never timing: a relayed copy carries the same tag.
fn payload(kind: u8, station: StationId, bit: bool, index: u64) -> [u8; 11] {
    let mut out = [0u8; 11];
    out[0] = kind;
    out[1] = station.0;
    out[2] = bit as u8;
    out[3..].copy_from_slice(&index.to_le_bytes());
    out
}

impl ChallengeMessage {
    pub fn mac_payload(&self) -> [u8; 11] {
        payload(b'C', self.origin, self.bit, self.round)
    }
}

impl ResponseMessage {
    pub fn mac_payload(&self) -> [u8; 11] {
        payload(b'R', self.destination, self.bit, self.round)
    }
}

impl BlockRequest {
    pub fn mac_payload(&self) -> [u8; 11] {
        payload(b'Q', self.station, self.which, self.block)
    }
}

impl BlockResponse {
    pub fn mac_payload(&self) -> [u8; 11] {
        payload(b'A', self.station, self.bit, self.block)
    }
}

impl Message {
    pub fn mac(&self) -> Option<MacTag> {
        match self {
            Message::Challenge(m) => m.mac,
            Message::Response(m) => m.mac,
            Message::BlockRequest(m) => m.mac,
            Message::BlockResponse(m) => m.mac,
        }
    }

    pub fn mac_payload(&self) -> [u8; 11] {
        match self {
            Message::Challenge(m) => m.mac_payload(),
            Message::Response(m) => m.mac_payload(),
            Message::BlockRequest(m) => m.mac_payload(),
            Message::BlockResponse(m) => m.mac_payload(),
        }
    }

    pub fn event(&self) -> SpacetimeEvent {
        match self {
            Message::Challenge(m) => m.sent,
            Message::Response(m) => m.emitted,
            Message::BlockRequest(m) => m.sent,
            Message::BlockResponse(m) => m.emitted,
        }
    }

    pub fn set_event(&mut self, ev: SpacetimeEvent) {
        match self {
            Message::Challenge(m) => m.sent = ev,
            Message::Response(m) => m.emitted = ev,
            Message::BlockRequest(m) => m.sent = ev,
            Message::BlockResponse(m) => m.emitted = ev,
        }
    }
}

/// Fixed key offsets for message MACs, so sender and receiver agree on the
/// slot without any exchange and no slot backs two different messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacSlots {
    pub stations: usize,
}

impl MacSlots {
    fn per_round(&self) -> u64 {
        2 * self.stations as u64
    }

    pub fn challenge(&self, round: u64, station: StationId) -> usize {
        ((self.per_round() * round + station.0 as u64) as usize) * MAC_KEY_BITS
    }

    pub fn response(&self, round: u64, station: StationId) -> usize {
        ((self.per_round() * round + (self.stations + station.index()) as u64) as usize) * MAC_KEY_BITS
    }

    /// Key bits needed to authenticate `rounds` rounds.
    pub fn bits_needed(&self, rounds: u64) -> usize {
        (self.per_round() * rounds) as usize * MAC_KEY_BITS
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn slots_are_disjoint() {
        let slots = MacSlots { stations: 4 };
        let mut seen = BTreeSet::new();
        for r in 0..10 {
            for s in 0..4 {
                assert!(seen.insert(slots.challenge(r, StationId(s))));
                assert!(seen.insert(slots.response(r, StationId(s))));
            }
        }
        assert_eq!(*seen.iter().last().unwrap() + MAC_KEY_BITS, slots.bits_needed(10));
    }
}

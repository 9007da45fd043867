use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BlockRequest, BlockResponse, ChallengeMessage, MacSlots, ResponseMessage, StationId};
use crate::keys::{key_index, mac_sign, mac_verify, BitString, BlockKeySet, KeyError, KeyStore};
use crate::spacetime::SpacetimeEvent;
use crate::time::ExactTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurnReason {
    /// A lone challenge saw no partner within the pairing wait.
    PartnerTimeout,
    /// The two challenge bits arrived at different times.
    SplitArrival,
    /// The carried round index skipped ahead of the tag's pair counter.
    CounterMismatch,
    /// A request conflicted with the bit already released for this round.
    Conflict,
}

/// What the tag did with an input.
#[derive(Clone, Debug, PartialEq)]
pub enum TagReaction {
    /// One-of-four release: the same bit goes to both stations.
    Respond {
        round: u64,
        key_index: u64,
        responses: [ResponseMessage; 2],
    },
    Answer(BlockResponse),
    /// First bit of a pair; the partner must arrive before `wake_at`.
    Waiting {
        round: u64,
        wake_at: ExactTime,
    },
    Burned {
        round: u64,
        reason: BurnReason,
    },
    Depleted {
        round: u64,
    },
    MacRejected,
    /// Switched off: the signal propagates through unmodified.
    PassThrough,
    Nothing,
}

type Arrival = Option<(bool, ExactTime)>;

/// The tag's internal state machine.
///
/// The tag has no clock. It pairs challenge bits that arrive at exactly the
/// same instant, checks the carried round index against its own pair
/// counter, and answers immediately.
#[derive(Clone, Debug)]
pub struct Tag {
    store: KeyStore,
    blocks: BlockKeySet,
    mac_key: Option<BitString>,
    slots: MacSlots,
    powered: bool,
    pending: BTreeMap<u64, [Arrival; 2]>,
    next_round: u64,
}

impl Tag {
    pub fn new(store: KeyStore, blocks: BlockKeySet, mac_key: Option<BitString>, stations: usize) -> Self {
        Tag {
            store,
            blocks,
            mac_key,
            slots: MacSlots { stations },
            powered: true,
            pending: BTreeMap::new(),
            next_round: 0,
        }
    }

    pub fn set_powered(&mut self, on: bool) {
        self.powered = on;
    }

    pub fn powered(&self) -> bool {
        self.powered
    }

    pub fn store(&self) -> &KeyStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut KeyStore {
        &mut self.store
    }

    pub fn blocks(&self) -> &BlockKeySet {
        &self.blocks
    }

    fn sign(&self, payload: &[u8], slot: usize) -> Option<crate::keys::MacTag> {
        self.mac_key.as_ref().and_then(|k| mac_sign(payload, k, slot).ok())
    }

    fn mac_ok(&self, payload: &[u8], mac: Option<crate::keys::MacTag>, slot: usize) -> bool {
        match &self.mac_key {
            None => true,
            Some(k) => mac.is_some_and(|t| t.key_offset == slot as u64 && mac_verify(payload, &t, k)),
        }
    }

    /// A challenge bit reached the tag at `at`.
    pub fn on_challenge(&mut self, ch: &ChallengeMessage, at: SpacetimeEvent, pair_wait: ExactTime) -> TagReaction {
        if !self.powered {
            return TagReaction::PassThrough;
        }
        if !self.mac_ok(&ch.mac_payload(), ch.mac, self.slots.challenge(ch.round, ch.origin)) {
            return TagReaction::MacRejected;
        }
        let side = ch.origin.index();
        if side > 1 {
            return TagReaction::Nothing;
        }
        let round = ch.round;
        let slot = self.pending.entry(round).or_insert([None, None]);
        if let Some(prev) = slot[side] {
            if prev == (ch.bit, at.t) {
                return TagReaction::Nothing;
            }
            self.pending.remove(&round);
            return self.burn(round, BurnReason::SplitArrival);
        }
        slot[side] = Some((ch.bit, at.t));
        match slot[1 - side] {
            None => TagReaction::Waiting {
                round,
                wake_at: at.t + pair_wait,
            },
            Some((_, t)) if t != at.t => {
                self.pending.remove(&round);
                self.burn(round, BurnReason::SplitArrival)
            }
            Some(_) => {
                let pair = self.pending.remove(&round).expect("pending pair");
                let (a, b) = (pair[0].unwrap().0, pair[1].unwrap().0);
                self.respond_to_pair(round, a, b, at)
            }
        }
    }

    /// The pairing wait armed at `armed_at` for `round` expired.
    pub fn on_pair_timeout(&mut self, round: u64, armed_at: ExactTime) -> TagReaction {
        let stale = match self.pending.get(&round) {
            Some(slot) => slot.iter().flatten().any(|&(_, t)| t == armed_at),
            None => false,
        };
        if !stale {
            return TagReaction::Nothing;
        }
        self.pending.remove(&round);
        self.burn(round, BurnReason::PartnerTimeout)
    }

    fn burn(&mut self, round: u64, reason: BurnReason) -> TagReaction {
        self.store.burn(round);
        self.next_round = self.next_round.max(round + 1);
        TagReaction::Burned { round, reason }
    }

    /// Both bits of round `round` arrived together at `at`: release
    /// `k_{4i + 2a + b}` toward both stations with zero processing delay.
    pub fn respond_to_pair(&mut self, round: u64, a: bool, b: bool, at: SpacetimeEvent) -> TagReaction {
        if round > self.next_round {
            return self.burn(round, BurnReason::CounterMismatch);
        }
        if round == self.next_round {
            self.next_round += 1;
        }
        match self.store.release_round_bit(round, a, b) {
            Ok(bit) => {
                let responses = [0u8, 1].map(|s| {
                    let mut r = ResponseMessage {
                        round,
                        bit,
                        emitted: at,
                        destination: StationId(s),
                        mac: None,
                    };
                    r.mac = self.sign(&r.mac_payload(), self.slots.response(round, StationId(s)));
                    r
                });
                TagReaction::Respond {
                    round,
                    key_index: key_index(round, a, b),
                    responses,
                }
            }
            Err(KeyError::Refused(_)) => TagReaction::Burned {
                round,
                reason: BurnReason::Conflict,
            },
            Err(_) => TagReaction::Depleted { round },
        }
    }

    pub fn on_block_request(&mut self, req: &BlockRequest, at: SpacetimeEvent) -> TagReaction {
        if !self.powered {
            return TagReaction::PassThrough;
        }
        if !self.mac_ok(
            &req.mac_payload(),
            req.mac,
            self.slots.challenge(req.block, req.station),
        ) {
            return TagReaction::MacRejected;
        }
        match self.blocks.release_block_bit(req.station.index(), req.block, req.which) {
            Ok(bit) => {
                let mut r = BlockResponse {
                    station: req.station,
                    block: req.block,
                    bit,
                    emitted: at,
                    mac: None,
                };
                r.mac = self.sign(&r.mac_payload(), self.slots.response(req.block, req.station));
                TagReaction::Answer(r)
            }
            Err(KeyError::Refused(_)) => TagReaction::Burned {
                round: req.block,
                reason: BurnReason::Conflict,
            },
            Err(_) => TagReaction::Depleted { round: req.block },
        }
    }
}

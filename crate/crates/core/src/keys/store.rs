use serde::{Deserialize, Serialize};

use super::{BitString, KeyError};

/// Index of the key bit released for round `i` on challenge bits `(a, b)`.
pub fn key_index(round: u64, a: bool, b: bool) -> u64 {
    4 * round + 2 * a as u64 + b as u64
}

/// Release state of one four-bit round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundState {
    #[default]
    Unreleased,
    /// Holds `2a + b` of the one bit that left the store.
    Released(u8),
    Burned,
}

/// The tag's copy of the shared key with one-of-four release discipline.
///
/// Each round owns bits `k_{4i} .. k_{4i+3}`. The first request for a round
/// fixes which of them is released; an identical request re-emits the same
/// bit, any other request burns the round for good.
#[derive(Clone, Debug, Default)]
pub struct KeyStore {
    bits: BitString,
    rounds: Vec<RoundState>,
}

impl KeyStore {
    pub fn new(bits: BitString) -> Self {
        let mut store = KeyStore {
            bits: BitString::new(),
            rounds: Vec::new(),
        };
        store.append(&bits);
        store
    }

    /// Appends fresh key material, e.g. the output of a key-expansion session.
    pub fn append(&mut self, more: &BitString) {
        self.bits.extend_from(more);
        self.rounds.resize(self.bits.len() / 4, RoundState::Unreleased);
    }

    pub fn len_bits(&self) -> usize {
        self.bits.len()
    }

    /// Number of complete rounds backed by key material.
    pub fn rounds_available(&self) -> u64 {
        self.rounds.len() as u64
    }

    pub fn state(&self, round: u64) -> Option<RoundState> {
        self.rounds.get(round as usize).copied()
    }

    pub fn release_round_bit(&mut self, round: u64, a: bool, b: bool) -> Result<bool, KeyError> {
        let idx = key_index(round, a, b);
        let which = (2 * a as u8) + b as u8;
        let state = self.rounds.get_mut(round as usize).ok_or(KeyError::Depleted {
            needed: idx,
            available: self.bits.len() as u64,
        })?;
        match *state {
            RoundState::Unreleased => {
                *state = RoundState::Released(which);
            }
            RoundState::Released(j) if j == which => {}
            RoundState::Released(_) => {
                *state = RoundState::Burned;
                return Err(KeyError::Refused(round));
            }
            RoundState::Burned => return Err(KeyError::Refused(round)),
        }
        Ok(self.bits.get(idx as usize).expect("round backed by material"))
    }

    /// Permanently disables a round without releasing anything.
    pub fn burn(&mut self, round: u64) {
        if let Some(s) = self.rounds.get_mut(round as usize) {
            *s = RoundState::Burned;
        }
    }
}

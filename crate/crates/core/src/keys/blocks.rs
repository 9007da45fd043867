use serde::{Deserialize, Serialize};

use super::{BitString, KeyError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockState {
    #[default]
    Unreleased,
    Released(u8),
    Burned,
}

/// Per-station sub-keys split into length-two blocks.
///
/// Each block releases at most one of its two bits; a request for the other
/// bit burns the block.
#[derive(Clone, Debug, Default)]
pub struct BlockKeySet {
    subkeys: Vec<BitString>,
    states: Vec<Vec<BlockState>>,
}

impl BlockKeySet {
    /// Deals a shared key stream round-robin into `stations` sub-keys:
    /// bit `j` goes to sub-key `j mod stations`.
    pub fn from_stream(stream: &BitString, stations: usize) -> Self {
        let mut subkeys = vec![BitString::new(); stations];
        for (j, &bit) in stream.bits().iter().enumerate() {
            subkeys[j % stations].push(bit);
        }
        BlockKeySet::from_subkeys(subkeys)
    }

    pub fn from_subkeys(subkeys: Vec<BitString>) -> Self {
        let states = subkeys
            .iter()
            .map(|k| vec![BlockState::Unreleased; k.len() / 2])
            .collect();
        BlockKeySet { subkeys, states }
    }

    pub fn stations(&self) -> usize {
        self.subkeys.len()
    }

    pub fn subkey(&self, station: usize) -> Option<&BitString> {
        self.subkeys.get(station)
    }

    /// Blocks available at every station.
    pub fn blocks_available(&self) -> u64 {
        self.states.iter().map(Vec::len).min().unwrap_or(0) as u64
    }

    pub fn state(&self, station: usize, block: u64) -> Option<BlockState> {
        self.states.get(station)?.get(block as usize).copied()
    }

    /// Expected bit for verification, without touching release state.
    pub fn peek(&self, station: usize, block: u64, which: bool) -> Option<bool> {
        self.subkeys.get(station)?.get(2 * block as usize + which as usize)
    }

    pub fn release_block_bit(&mut self, station: usize, block: u64, which: bool) -> Result<bool, KeyError> {
        let states = self.states.get_mut(station).ok_or(KeyError::BadStation(station))?;
        let idx = 2 * block + which as u64;
        let state = states.get_mut(block as usize).ok_or(KeyError::Depleted {
            needed: idx,
            available: self.subkeys[station].len() as u64,
        })?;
        match *state {
            BlockState::Unreleased => *state = BlockState::Released(which as u8),
            BlockState::Released(w) if w == which as u8 => {}
            BlockState::Released(_) => {
                *state = BlockState::Burned;
                return Err(KeyError::Refused(block));
            }
            BlockState::Burned => return Err(KeyError::Refused(block)),
        }
        Ok(self.subkeys[station].get(idx as usize).expect("block backed"))
    }
}

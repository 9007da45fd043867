use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("invalid hex digit {0:?} at position {1}")]
    BadDigit(char, usize),
    #[error("bit length {0} is not a multiple of 4; cannot hex-encode")]
    Unaligned(usize),
}

/// An ordered bit sequence `k_0 k_1 k_2 ...`.
///
/// Hex form is MSB-first per nibble, so `"8"` is the bits `1000`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        BitString(Vec::new())
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitString(bits)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut bits = Vec::with_capacity(len);
        while bits.len() < len {
            let word = rng.next_u64();
            let take = (len - bits.len()).min(64);
            bits.extend((0..take).map(|i| (word >> i) & 1 == 1));
        }
        BitString(bits)
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let mut bits = Vec::with_capacity(s.len() * 4);
        for (i, ch) in s.chars().enumerate() {
            let nibble = ch.to_digit(16).ok_or(HexError::BadDigit(ch, i))?;
            bits.extend((0..4).rev().map(|b| (nibble >> b) & 1 == 1));
        }
        Ok(BitString(bits))
    }

    pub fn to_hex(&self) -> Result<String, HexError> {
        if !self.0.len().is_multiple_of(4) {
            return Err(HexError::Unaligned(self.0.len()));
        }
        Ok(self
            .0
            .chunks(4)
            .map(|c| {
                let v = c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
                char::from_digit(v, 16).expect("nibble")
            })
            .collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0.get(i).copied()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    /// Removes and returns the first `n` bits (or fewer if short).
    pub fn split_off_front(&mut self, n: usize) -> BitString {
        let n = n.min(self.0.len());
        let rest = self.0.split_off(n);
        BitString(std::mem::replace(&mut self.0, rest))
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// Little-endian 64-bit word from bits `[at, at + 64)`.
    pub fn word_at(&self, at: usize) -> Option<u64> {
        let slice = self.0.get(at..at + 64)?;
        Some(
            slice
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i)),
        )
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: String = self.0.iter().take(64).map(|b| if *b { '1' } else { '0' }).collect();
        if self.0.len() > 64 {
            write!(f, "BitString({}..; {} bits)", shown, self.0.len())
        } else {
            write!(f, "BitString({shown})")
        }
    }
}

impl From<Vec<bool>> for BitString {
    fn from(v: Vec<bool>) -> Self {
        BitString(v)
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_hex().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitString::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_is_msb_first() {
        let b = BitString::from_hex("8a").unwrap();
        assert_eq!(b.bits(), &[true, false, false, false, true, false, true, false]);
        assert_eq!(BitString::from_hex("zz"), Err(HexError::BadDigit('z', 0)));
        assert_eq!(BitString::from_bits(vec![true]).to_hex(), Err(HexError::Unaligned(1)));
    }

    proptest! {
        #[test]
        fn hex_roundtrip(s in "[0-9a-f]{0,64}") {
            let b = BitString::from_hex(&s).unwrap();
            prop_assert_eq!(b.to_hex().unwrap(), s);
        }
    }
}

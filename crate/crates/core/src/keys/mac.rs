//! One-time polynomial MAC over GF(2^64).
//!
//! tag = H_k(m) xor pad, where H_k evaluates the message blocks (plus a
//! trailing length block) as a polynomial at the multiplier key k. Each tag
//! consumes 128 fresh key bits: 64 for k, 64 for the pad. For two distinct
//! messages of at most L blocks (length block included) a forgery succeeds
//! with probability at most L / 2^64.

use serde::{Deserialize, Serialize};

use super::{BitString, KeyError};

/// Key bits consumed per tag.
pub const MAC_KEY_BITS: usize = 128;

/// x^64 = x^4 + x^3 + x + 1 (mod the field polynomial).
const REDUCTION: u64 = 0x1b;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MacTag {
    pub value: u64,
    /// First bit of the 128-bit key slice this tag consumed.
    pub key_offset: u64,
}

/// Multiplication in GF(2^64) modulo x^64 + x^4 + x^3 + x + 1.
pub fn gf64_mul(mut a: u64, mut b: u64) -> u64 {
    let mut acc = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        let carry = a >> 63;
        a <<= 1;
        if carry == 1 {
            a ^= REDUCTION;
        }
    }
    acc
}

/// Horner evaluation of the 8-byte little-endian message blocks, followed by
/// the message bit length, at point `k`.
pub fn poly_hash(message: &[u8], k: u64) -> u64 {
    let mut h = 0u64;
    for chunk in message.chunks(8) {
        let mut block = [0u8; 8];
        block[..chunk.len()].copy_from_slice(chunk);
        h = gf64_mul(h ^ u64::from_le_bytes(block), k);
    }
    gf64_mul(h ^ (message.len() as u64).wrapping_mul(8), k)
}

fn key_words(key: &BitString, offset: usize) -> Result<(u64, u64), KeyError> {
    let depleted = || KeyError::Depleted {
        needed: (offset + MAC_KEY_BITS - 1) as u64,
        available: key.len() as u64,
    };
    let k = key.word_at(offset).ok_or_else(depleted)?;
    let pad = key.word_at(offset + 64).ok_or_else(depleted)?;
    Ok((k, pad))
}

/// Signs `message` with key bits `[offset, offset + 128)` of `key`.
pub fn mac_sign(message: &[u8], key: &BitString, offset: usize) -> Result<MacTag, KeyError> {
    let (k, pad) = key_words(key, offset)?;
    Ok(MacTag {
        value: poly_hash(message, k) ^ pad,
        key_offset: offset as u64,
    })
}

pub fn mac_verify(message: &[u8], tag: &MacTag, key: &BitString) -> bool {
    match mac_sign(message, key, tag.key_offset as usize) {
        Ok(expected) => expected.value == tag.value,
        Err(_) => false,
    }
}

/// A key stream consumed strictly front to back, 128 bits per tag.
///
/// Sender and receiver each hold an identical pool and advance it in
/// lockstep, so no key bit ever backs two tags.
#[derive(Clone, Debug, Default)]
pub struct AuthKeyPool {
    key: BitString,
    cursor: usize,
    used: Vec<(u64, u64)>,
}

impl AuthKeyPool {
    pub fn new(key: BitString) -> Self {
        AuthKeyPool {
            key,
            cursor: 0,
            used: Vec::new(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.key.len() - self.cursor
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }

    pub fn replenish(&mut self, more: &BitString) {
        self.key.extend_from(more);
    }

    /// Half-open `[start, end)` key ranges consumed so far, in order.
    pub fn used_ranges(&self) -> &[(u64, u64)] {
        &self.used
    }

    fn take(&mut self) -> Result<usize, KeyError> {
        if self.remaining() < MAC_KEY_BITS {
            return Err(KeyError::Depleted {
                needed: (self.cursor + MAC_KEY_BITS - 1) as u64,
                available: self.key.len() as u64,
            });
        }
        let at = self.cursor;
        self.cursor += MAC_KEY_BITS;
        self.used.push((at as u64, self.cursor as u64));
        Ok(at)
    }

    pub fn sign(&mut self, message: &[u8]) -> Result<MacTag, KeyError> {
        let at = self.take()?;
        mac_sign(message, &self.key, at)
    }

    /// Consumes the next slot and checks the tag against it.
    pub fn verify(&mut self, message: &[u8], tag: &MacTag) -> Result<bool, KeyError> {
        let at = self.take()?;
        Ok(tag.key_offset == at as u64 && mac_verify(message, tag, &self.key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Schoolbook carry-less product then long-division reduction.
    fn gf64_mul_reference(a: u64, b: u64) -> u64 {
        let mut wide = 0u128;
        for i in 0..64 {
            if (b >> i) & 1 == 1 {
                wide ^= (a as u128) << i;
            }
        }
        let modulus: u128 = (1u128 << 64) | REDUCTION as u128;
        for bit in (64..128).rev() {
            if (wide >> bit) & 1 == 1 {
                wide ^= modulus << (bit - 64);
            }
        }
        wide as u64
    }

    #[test]
    fn field_multiplication_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let (a, b) = (rng.random::<u64>(), rng.random::<u64>());
            assert_eq!(gf64_mul(a, b), gf64_mul_reference(a, b));
        }
        assert_eq!(gf64_mul(1, 0xdead), 0xdead);
        assert_eq!(gf64_mul(1 << 63, 2), REDUCTION);
    }

    #[test]
    fn empty_message_tag_is_pad() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let key = BitString::random(128, &mut rng);
        let tag = mac_sign(&[], &key, 0).unwrap();
        assert_eq!(tag.value, key.word_at(64).unwrap());
    }

    #[test]
    fn sign_verify_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = BitString::random(512, &mut rng);
        let msg: Vec<u8> = (0..37).map(|_| rng.random()).collect();
        let tag = mac_sign(&msg, &key, 128).unwrap();
        assert_eq!(tag.key_offset, 128);
        assert!(mac_verify(&msg, &tag, &key));
        assert_eq!(mac_sign(&msg, &key, 128).unwrap(), tag);
    }

    #[test]
    fn padding_does_not_collide() {
        let key = BitString::from_hex(&"3".repeat(32)).unwrap();
        let a = mac_sign(b"a", &key, 0).unwrap();
        let b = mac_sign(b"a\0", &key, 0).unwrap();
        let c = mac_sign(b"\0\0\0\0\0\0\0\0a", &key, 0).unwrap();
        assert_ne!(a.value, b.value);
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn flipped_bit_is_rejected_under_random_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut accepted = 0;
        for _ in 0..10_000 {
            let key = BitString::random(128, &mut rng);
            let msg: Vec<u8> = (0..24).map(|_| rng.random()).collect();
            let tag = mac_sign(&msg, &key, 0).unwrap();
            let mut forged = msg.clone();
            let bit = rng.random_range(0..forged.len() * 8);
            forged[bit / 8] ^= 1 << (bit % 8);
            if mac_verify(&forged, &tag, &key) {
                accepted += 1;
            }
        }
        assert_eq!(accepted, 0);
    }

    #[test]
    fn short_key_is_depletion() {
        let key = BitString::from_hex("ff").unwrap();
        assert!(matches!(mac_sign(b"x", &key, 0), Err(KeyError::Depleted { .. })));
    }

    #[test]
    fn pool_ranges_are_disjoint_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let key = BitString::random(128 * 5, &mut rng);
        let mut alice = AuthKeyPool::new(key.clone());
        let mut bob = AuthKeyPool::new(key);
        for i in 0..5u8 {
            let tag = alice.sign(&[i]).unwrap();
            assert!(bob.verify(&[i], &tag).unwrap());
        }
        assert!(alice.sign(b"more").is_err());
        let r = alice.used_ranges();
        for w in r.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
    }
}

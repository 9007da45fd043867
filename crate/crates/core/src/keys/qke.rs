//! BB84 key expansion at the qubit-abstraction level.
//!
//! Qubits are ideal (no loss, no detector noise). A measurement in the
//! preparation basis returns the prepared bit; in the other basis it returns a
//! uniformly random bit. Every classical message is authenticated with a
//! one-time MAC drawn from the preshared authentication key.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AuthKeyPool, BitString, KeyError, MAC_KEY_BITS};

/// Classical messages per expansion: Bob's bases, Alice's bases, Alice's
/// sample, Bob's sample.
const MESSAGES_PER_ROUND: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QkeParams {
    pub qber_threshold: f64,
    /// Fraction of sifted positions sacrificed for error estimation.
    pub f_est: f64,
}

impl Default for QkeParams {
    fn default() -> Self {
        QkeParams {
            qber_threshold: 0.11,
            f_est: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Eavesdrop {
    None,
    /// Eve measures each qubit with this probability in a random basis and
    /// resends her result in her basis.
    InterceptResend {
        fraction: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AbortCause {
    QberExceeded {
        qber: f64,
    },
    /// MAC check failed on the classical message with this index.
    AuthenticationFailure {
        message: usize,
    },
    AuthKeyDepleted,
    /// The session was already closed or aborted.
    NotRunning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum QkeStatus {
    Running,
    Completed,
    Aborted(AbortCause),
}

/// The public classical channel between the parties.
pub trait ClassicalChannel {
    /// Carries message number `index`; may alter the payload in transit.
    fn carry(&mut self, index: usize, payload: &mut Vec<u8>);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HonestChannel;

impl ClassicalChannel for HonestChannel {
    fn carry(&mut self, _index: usize, _payload: &mut Vec<u8>) {}
}

/// Flips one bit of one message.
#[derive(Clone, Copy, Debug)]
pub struct TamperingChannel {
    pub message: usize,
    pub bit: usize,
}

impl ClassicalChannel for TamperingChannel {
    fn carry(&mut self, index: usize, payload: &mut Vec<u8>) {
        if index == self.message {
            if payload.is_empty() {
                payload.push(0);
            }
            let bit = self.bit % (payload.len() * 8);
            payload[bit / 8] ^= 1 << (bit % 8);
        }
    }
}

/// Result of one successful expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct QkeOutput {
    pub alice_key: BitString,
    pub bob_key: BitString,
    pub raw_length: usize,
    pub sifted_length: usize,
    pub sample_length: usize,
    pub sample_errors: usize,
    pub qber: f64,
    pub auth_bits_used: usize,
}

/// A key-expansion session between the station and the tag.
#[derive(Clone, Debug)]
pub struct QkeSession {
    alice_auth: AuthKeyPool,
    bob_auth: AuthKeyPool,
    params: QkeParams,
    raw_length: u64,
    sifted_key: BitString,
    qber: f64,
    last_sample: (usize, usize),
    status: QkeStatus,
    messages: usize,
}

struct BitSource {
    word: u64,
    left: u32,
}

impl BitSource {
    fn new() -> Self {
        BitSource { word: 0, left: 0 }
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.left == 0 {
            self.word = rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        bit
    }
}

fn pack(bits: impl Iterator<Item = bool>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, b) in bits.enumerate() {
        if i % 8 == 0 {
            out.push(0);
        }
        if b {
            *out.last_mut().unwrap() |= 1 << (i % 8);
        }
    }
    out
}

fn unpack(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n)
        .map(|i| bytes.get(i / 8).is_some_and(|b| (b >> (i % 8)) & 1 == 1))
        .collect()
}

impl QkeSession {
    pub fn new(initial_auth_key: BitString, params: QkeParams) -> Self {
        QkeSession {
            alice_auth: AuthKeyPool::new(initial_auth_key.clone()),
            bob_auth: AuthKeyPool::new(initial_auth_key),
            params,
            raw_length: 0,
            sifted_key: BitString::new(),
            qber: 0.0,
            last_sample: (0, 0),
            status: QkeStatus::Running,
            messages: 0,
        }
    }

    pub fn status(&self) -> &QkeStatus {
        &self.status
    }

    pub fn params(&self) -> QkeParams {
        self.params
    }

    /// Qubit transmissions over the life of the session.
    pub fn raw_length(&self) -> u64 {
        self.raw_length
    }

    /// Shared key produced so far (Alice's copy).
    pub fn sifted_key(&self) -> &BitString {
        &self.sifted_key
    }

    /// QBER measured by the most recent expansion.
    /// Sample size and mismatches of the latest completed estimate,
    /// including one that caused an abort.
    pub fn last_sample(&self) -> (usize, usize) {
        self.last_sample
    }

    pub fn qber(&self) -> f64 {
        self.qber
    }

    pub fn auth_remaining(&self) -> usize {
        self.alice_auth.remaining()
    }

    pub fn auth_consumed(&self) -> usize {
        self.alice_auth.consumed()
    }

    pub fn auth_ranges(&self) -> &[(u64, u64)] {
        self.alice_auth.used_ranges()
    }

    /// Authentication bits one expansion consumes.
    pub fn auth_cost() -> usize {
        MESSAGES_PER_ROUND * MAC_KEY_BITS
    }

    /// Feeds each party's copy of fresh key back into its own
    /// authentication pool.
    pub fn replenish_auth(&mut self, alice: &BitString, bob: &BitString) {
        self.alice_auth.replenish(alice);
        self.bob_auth.replenish(bob);
    }

    pub fn close(&mut self) {
        if self.status == QkeStatus::Running {
            self.status = QkeStatus::Completed;
        }
    }

    fn abort(&mut self, cause: AbortCause) -> AbortCause {
        self.status = QkeStatus::Aborted(cause.clone());
        cause
    }

    /// Sends one authenticated classical message and returns what the
    /// receiver accepted.
    fn exchange(
        &mut self,
        from_alice: bool,
        payload: Vec<u8>,
        channel: &mut dyn ClassicalChannel,
    ) -> Result<Vec<u8>, AbortCause> {
        let index = self.messages;
        self.messages += 1;
        let (sender, receiver) = if from_alice {
            (&mut self.alice_auth, &mut self.bob_auth)
        } else {
            (&mut self.bob_auth, &mut self.alice_auth)
        };
        let tag = sender.sign(&payload).map_err(|_| AbortCause::AuthKeyDepleted)?;
        let mut wire = payload;
        channel.carry(index, &mut wire);
        match receiver.verify(&wire, &tag) {
            Ok(true) => Ok(wire),
            Ok(false) => Err(AbortCause::AuthenticationFailure { message: index }),
            Err(KeyError::Depleted { .. }) => Err(AbortCause::AuthKeyDepleted),
            Err(_) => Err(AbortCause::AuthenticationFailure { message: index }),
        }
    }

    /// Runs one BB84 expansion with `n_raw` qubit transmissions.
    ///
    /// On success the unsampled sifted bits are appended to the session key
    /// and returned as both parties' copies.
    pub fn expand<R: Rng + ?Sized>(
        &mut self,
        n_raw: usize,
        channel: &mut dyn ClassicalChannel,
        eavesdrop: Eavesdrop,
        rng: &mut R,
    ) -> Result<QkeOutput, AbortCause> {
        if self.status != QkeStatus::Running {
            return Err(AbortCause::NotRunning);
        }
        if self.alice_auth.remaining() < Self::auth_cost() {
            return Err(self.abort(AbortCause::AuthKeyDepleted));
        }
        let auth_before = self.alice_auth.consumed();
        let mut src = BitSource::new();
        let mut alice_bits = Vec::with_capacity(n_raw);
        let mut alice_bases = Vec::with_capacity(n_raw);
        let mut bob_bases = Vec::with_capacity(n_raw);
        let mut bob_bits = Vec::with_capacity(n_raw);
        for _ in 0..n_raw {
            let bit = src.next(rng);
            let basis = src.next(rng);
            let (mut state_bit, mut state_basis) = (bit, basis);
            if let Eavesdrop::InterceptResend { fraction } = eavesdrop {
                if fraction >= 1.0 || rng.random_bool(fraction.clamp(0.0, 1.0)) {
                    let eve_basis = src.next(rng);
                    if eve_basis != state_basis {
                        state_bit = src.next(rng);
                    }
                    state_basis = eve_basis;
                }
            }
            let bob_basis = src.next(rng);
            let measured = if bob_basis == state_basis {
                state_bit
            } else {
                src.next(rng)
            };
            alice_bits.push(bit);
            alice_bases.push(basis);
            bob_bases.push(bob_basis);
            bob_bits.push(measured);
        }
        self.raw_length += n_raw as u64;

        let run = (|| {
            let bob_bases_rx = self.exchange(false, pack(bob_bases.iter().copied()), channel)?;
            let bob_bases_at_alice = unpack(&bob_bases_rx, n_raw);
            let alice_bases_rx = self.exchange(true, pack(alice_bases.iter().copied()), channel)?;
            let alice_bases_at_bob = unpack(&alice_bases_rx, n_raw);

            let sifted_alice: Vec<usize> = (0..n_raw)
                .filter(|&i| alice_bases[i] == bob_bases_at_alice[i])
                .collect();
            let sifted_bob: Vec<usize> = (0..n_raw).filter(|&i| alice_bases_at_bob[i] == bob_bases[i]).collect();

            let m = sifted_alice.len();
            let sample_len = ((m as f64) * self.params.f_est).round() as usize;
            let mut sample = index::sample(rng, m, sample_len.min(m)).into_vec();
            sample.sort_unstable();

            let mut msg = Vec::with_capacity(4 + sample.len() * 4);
            msg.extend_from_slice(&(sample.len() as u32).to_le_bytes());
            for &s in &sample {
                msg.extend_from_slice(&(s as u32).to_le_bytes());
            }
            msg.extend(pack(sample.iter().map(|&s| alice_bits[sifted_alice[s]])));
            let rx = self.exchange(true, msg, channel)?;

            // Bob parses the sample announcement from what he received.
            let count = u32::from_le_bytes(rx[..4].try_into().unwrap_or([0; 4])) as usize;
            let bob_sample: Vec<usize> = (0..count)
                .map(|j| {
                    let at = 4 + 4 * j;
                    u32::from_le_bytes(rx[at..at + 4].try_into().unwrap_or([0; 4])) as usize
                })
                .collect();
            let bob_sample_bits: Vec<bool> = bob_sample
                .iter()
                .map(|&s| sifted_bob.get(s).is_some_and(|&i| bob_bits[i]))
                .collect();
            let reply = self.exchange(false, pack(bob_sample_bits.iter().copied()), channel)?;
            let bob_at_alice = unpack(&reply, sample.len());

            let errors = sample
                .iter()
                .zip(&bob_at_alice)
                .filter(|(&s, &b)| alice_bits[sifted_alice[s]] != b)
                .count();
            let qber = if sample.is_empty() {
                0.0
            } else {
                errors as f64 / sample.len() as f64
            };
            Ok::<_, AbortCause>((sifted_alice, sifted_bob, sample, errors, qber))
        })();

        let (sifted_alice, sifted_bob, sample, errors, qber) = match run {
            Ok(v) => v,
            Err(cause) => return Err(self.abort(cause)),
        };
        self.qber = qber;
        self.last_sample = (sample.len(), errors);
        if qber > self.params.qber_threshold {
            return Err(self.abort(AbortCause::QberExceeded { qber }));
        }

        let mut in_sample = vec![false; sifted_alice.len()];
        for &s in &sample {
            in_sample[s] = true;
        }
        let keep = |sifted: &[usize], bits: &[bool]| -> BitString {
            sifted
                .iter()
                .enumerate()
                .filter(|(j, _)| !in_sample.get(*j).copied().unwrap_or(true))
                .map(|(_, &i)| bits[i])
                .collect::<Vec<_>>()
                .into()
        };
        let alice_key = keep(&sifted_alice, &alice_bits);
        let bob_key = keep(&sifted_bob, &bob_bits);
        self.sifted_key.extend_from(&alice_key);
        Ok(QkeOutput {
            alice_key,
            bob_key,
            raw_length: n_raw,
            sifted_length: sifted_alice.len(),
            sample_length: sample.len(),
            sample_errors: errors,
            qber,
            auth_bits_used: self.alice_auth.consumed() - auth_before,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn session(seed: u64) -> (QkeSession, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let auth = BitString::random(1024, &mut rng);
        (QkeSession::new(auth, QkeParams::default()), rng)
    }

    #[test]
    fn noiseless_session_agrees() {
        let (mut s, mut rng) = session(11);
        let out = s.expand(1024, &mut HonestChannel, Eavesdrop::None, &mut rng).unwrap();
        assert_eq!(out.qber, 0.0);
        assert_eq!(out.alice_key, out.bob_key);
        assert_eq!(out.alice_key.len(), out.sifted_length - out.sample_length);
        // 512 expected sifted, sigma 16
        assert!((out.sifted_length as i64 - 512).abs() < 64, "{}", out.sifted_length);
        assert_eq!(out.auth_bits_used, 512);
        assert_eq!(s.status(), &QkeStatus::Running);
    }

    #[test]
    fn intercept_resend_aborts() {
        let (mut s, mut rng) = session(12);
        let err = s
            .expand(
                4096,
                &mut HonestChannel,
                Eavesdrop::InterceptResend { fraction: 1.0 },
                &mut rng,
            )
            .unwrap_err();
        match err {
            AbortCause::QberExceeded { qber } => assert!((qber - 0.25).abs() < 0.05, "{qber}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(s.status(), QkeStatus::Aborted(_)));
        assert_eq!(
            s.expand(16, &mut HonestChannel, Eavesdrop::None, &mut rng),
            Err(AbortCause::NotRunning)
        );
    }

    #[test]
    fn tampering_on_every_message_aborts() {
        for message in 0..4 {
            let (mut s, mut rng) = session(13);
            let mut ch = TamperingChannel { message, bit: 3 };
            let err = s.expand(256, &mut ch, Eavesdrop::None, &mut rng).unwrap_err();
            assert_eq!(err, AbortCause::AuthenticationFailure { message });
        }
    }

    #[test]
    fn depleted_auth_key_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut s = QkeSession::new(BitString::random(300, &mut rng), QkeParams::default());
        assert_eq!(
            s.expand(64, &mut HonestChannel, Eavesdrop::None, &mut rng),
            Err(AbortCause::AuthKeyDepleted)
        );
    }

    /// Exact intercept-resend error rate from the 4 x 2 case table
    /// (Alice basis = Bob basis after sifting; Eve basis, Eve outcome).
    #[test]
    fn intercept_resend_error_rate_is_one_quarter_by_enumeration() {
        let mut total = 0.0;
        for _shared_basis in 0..2 {
            for eve_same in [true, false] {
                // Eve in the same basis passes the bit; otherwise Bob sees a
                // random bit: error probability 1/2.
                let p_err = if eve_same { 0.0 } else { 0.5 };
                total += 0.25 * p_err;
            }
        }
        assert_eq!(total, 0.25);
    }
}

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::rng::CountingRng;
use super::trace::{ActorId, DropReason, TagOutcome, Trace, TraceKind, TraceRecord};
use super::{Scenario, SimError};
use crate::adversary::{
    validate_injection, Action, AdversaryCtx, CapabilityViolation, CausalityViolation, DatumId, InfoLedger, Injection,
    Observation, Strategy, Target,
};
use crate::keys::{
    key_index, mac_verify, AbortCause, BitString, BlockKeySet, Eavesdrop, HonestChannel, KeyStore, QkeSession,
};
use crate::protocol::{
    authenticate_3d, decide, schedule_challenges_1d, schedule_requests, verify_block_station, verify_round,
    AuthDecision, BlockRequest, BlockRound, DistanceBound, FailureCause, MacSlots, Message, Mode, ObservedResponse,
    RoundVerdict, StationId, StationVerdict, Tag, TagReaction,
};
use crate::spacetime::{Geometry, Position, SpacetimeEvent};
use crate::time::ExactTime;

/// Key-expansion statistics of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QkeSummary {
    pub sessions: u32,
    pub raw_length: usize,
    pub sifted_length: usize,
    pub sample_length: usize,
    pub sample_errors: usize,
    pub aborted: Option<AbortCause>,
}

impl QkeSummary {
    /// Pooled QBER over all sampled positions.
    pub fn qber(&self) -> f64 {
        if self.sample_length == 0 {
            0.0
        } else {
            self.sample_errors as f64 / self.sample_length as f64
        }
    }
}

/// Everything one run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub decision: AuthDecision,
    /// Verdicts up to and including the first failed round.
    pub verdicts: Vec<RoundVerdict>,
    /// Per-round distance bounds (multilateration mode only).
    pub bounds: Vec<Vec<Option<DistanceBound>>>,
    pub qke: QkeSummary,
    pub injections: u64,
    pub ledger: InfoLedger,
    pub trace: Option<Trace>,
}

impl RunOutcome {
    /// Stations of the first failed round.
    fn failed_stations(&self) -> &[StationVerdict] {
        self.verdicts
            .iter()
            .find(|v| !v.pass)
            .map(|v| v.stations.as_slice())
            .unwrap_or(&[])
    }

    /// The failed round was caught by timing at some station.
    pub fn delay_detected(&self) -> bool {
        self.failed_stations()
            .iter()
            .any(|s| matches!(s.cause, Some(FailureCause::Late | FailureCause::Early)))
    }

    pub fn wrong_bit_detected(&self) -> bool {
        self.failed_stations()
            .iter()
            .any(|s| s.cause == Some(FailureCause::WrongBit))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
}

#[derive(Clone, Debug)]
enum Event {
    StationSend(Message),
    Deliver { message: Message, to: Target, epoch: u32 },
    PairTimeout { round: u64, armed_at: ExactTime },
    Verify { round: u64 },
    AdversaryEmit(Injection),
    Wake { token: u64 },
    Relocate { to: Position, enclose: bool },
}

/// Heap key; the event itself waits in `Engine::pending`.
#[derive(Debug)]
struct Queued {
    at: ExactTime,
    actor: ActorId,
    seq: u64,
    slot: usize,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.actor, self.seq).cmp(&(other.at, other.actor, other.seq))
    }
}

struct TagSite {
    position: Position,
    epoch: u32,
    enclosed: bool,
    moved_at: ExactTime,
}

enum Verifier {
    Line {
        key: BitString,
        bits: Vec<[bool; 2]>,
    },
    Blocks {
        keys: BlockKeySet,
        requests: Vec<Vec<BlockRequest>>,
        rounds: Vec<BlockRound>,
    },
}

struct Engine<'a> {
    sc: &'a Scenario,
    geom: &'a Geometry,
    rng: CountingRng,
    now: ExactTime,
    queue: BinaryHeap<Reverse<Queued>>,
    pending: Vec<Option<Event>>,
    free: Vec<usize>,
    seq: u64,
    ledger: InfoLedger,
    strategy: Box<dyn Strategy>,
    tag: Tag,
    site: TagSite,
    jams: Vec<(Target, ExactTime)>,
    mac_key: Option<BitString>,
    slots: MacSlots,
    verifier: Verifier,
    observed: Vec<Vec<Vec<ObservedResponse>>>,
    verdicts: Vec<RoundVerdict>,
    decision: Option<AuthDecision>,
    injections: u64,
    records: Option<Vec<TraceRecord>>,
}

/// Runs one session with a full trace.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutcome, SimError> {
    run_with(scenario, seed, RunOptions { trace: true })
}

pub fn run_with(scenario: &Scenario, seed: u64, opts: RunOptions) -> Result<RunOutcome, SimError> {
    scenario.validate().map_err(SimError::Invalid)?;
    let mut rng = CountingRng::seed_from_u64(seed);
    let mut records = opts.trace.then(Vec::new);
    let (key, qke) = provision_keys(scenario, &mut rng, &mut records)?;
    let Some((station_key, tag_key)) = key else {
        let decision = AuthDecision::rejected(None, FailureCause::KeyExchangeAborted, 0);
        push_record(
            &mut records,
            &rng,
            ExactTime::ZERO,
            ActorId::Engine,
            TraceKind::Decision {
                decision: decision.clone(),
            },
            Vec::new(),
        );
        return Ok(RunOutcome {
            decision,
            verdicts: Vec::new(),
            bounds: Vec::new(),
            qke,
            injections: 0,
            ledger: InfoLedger::new(),
            trace: records.map(|r| Trace::new(seed, scenario.clone(), r)),
        });
    };
    let mut engine = Engine::new(scenario, rng, station_key, tag_key, records);
    engine.start()?;
    engine.run_queue()?;
    let decision = engine.decision.clone().unwrap_or_else(|| engine.decide());
    let bounds = match &engine.verifier {
        Verifier::Blocks { rounds, .. } => rounds.iter().map(|r| r.bounds.clone()).collect(),
        Verifier::Line { .. } => Vec::new(),
    };
    Ok(RunOutcome {
        decision,
        verdicts: engine.verdicts,
        bounds,
        qke,
        injections: engine.injections,
        ledger: engine.ledger,
        trace: engine.records.map(|r| Trace::new(seed, scenario.clone(), r)),
    })
}

fn push_record(
    records: &mut Option<Vec<TraceRecord>>,
    rng: &CountingRng,
    t: ExactTime,
    actor: ActorId,
    kind: TraceKind,
    data: Vec<DatumId>,
) {
    if let Some(rs) = records {
        rs.push(TraceRecord {
            index: rs.len() as u64,
            t,
            actor,
            kind,
            data,
            rng_draws: rng.draws(),
        });
    }
}

/// Fixed auth key length when the scenario supplies none.
const DEFAULT_AUTH_BITS: usize = 1024;
const MAX_QKE_SESSIONS: u32 = 10_000;

/// Both parties' key streams: tag bits first, then MAC bits. Runs key
/// expansion when the preshared key is too short; `None` if it aborted.
///
/// Expansion has no error correction, so an eavesdropper that stays under
/// the QBER threshold leaves the station's and the tag's copies different.
fn provision_keys(
    sc: &Scenario,
    rng: &mut CountingRng,
    records: &mut Option<Vec<TraceRecord>>,
) -> Result<(Option<(BitString, BitString)>, QkeSummary), SimError> {
    let need = sc.tag_bits() + sc.mac_bits();
    let mut summary = QkeSummary::default();
    let ready = |records: &mut Option<Vec<TraceRecord>>, rng: &CountingRng, mismatched_bits: usize| {
        let kind = TraceKind::KeysReady {
            tag_bits: sc.tag_bits(),
            mac_bits: sc.mac_bits(),
            mismatched_bits,
        };
        push_record(records, rng, ExactTime::ZERO, ActorId::Engine, kind, Vec::new());
    };
    if let Some(k) = &sc.keys.initial_key {
        if k.len() >= need {
            ready(records, rng, 0);
            let key = BitString::from_bits(k.bits()[..need].to_vec());
            return Ok((Some((key.clone(), key)), summary));
        }
    }
    let auth = match (&sc.keys.auth_key, &sc.keys.initial_key) {
        (Some(k), _) | (None, Some(k)) => k.clone(),
        (None, None) => BitString::random(DEFAULT_AUTH_BITS, rng),
    };
    let params = sc.keys.qke_params();
    let mut session = QkeSession::new(auth, params);
    let eavesdrop = if sc.keys.eavesdrop_fraction > 0.0 {
        Eavesdrop::InterceptResend {
            fraction: sc.keys.eavesdrop_fraction,
        }
    } else {
        Eavesdrop::None
    };
    let cost = QkeSession::auth_cost();
    let mut alice = BitString::new();
    let mut bob = BitString::new();
    while alice.len() < need {
        if summary.sessions >= MAX_QKE_SESSIONS {
            return Err(SimError::KeyStarvation(format!(
                "{} expansions of at most {} qubits did not yield {need} key bits",
                summary.sessions, sc.keys.n_raw
            )));
        }
        let want = (need - alice.len() + cost) as f64;
        let per_qubit = 0.5 * (1.0 - params.f_est);
        let n_raw = sc.keys.n_raw.min((want / per_qubit).ceil() as usize + 64);
        match session.expand(n_raw, &mut HonestChannel, eavesdrop, rng) {
            Ok(out) => {
                summary.sessions += 1;
                summary.raw_length += out.raw_length;
                summary.sifted_length += out.sifted_length;
                summary.sample_length += out.sample_length;
                summary.sample_errors += out.sample_errors;
                let kind = TraceKind::Qke {
                    session: summary.sessions,
                    raw_length: out.raw_length,
                    sifted_length: out.sifted_length,
                    sample_length: out.sample_length,
                    sample_errors: out.sample_errors,
                    auth_bits_used: out.auth_bits_used,
                };
                push_record(records, rng, ExactTime::ZERO, ActorId::Engine, kind, Vec::new());
                let (mut a, mut b) = (out.alice_key, out.bob_key);
                if a.len() <= cost {
                    continue;
                }
                let refill_a = a.split_off_front(cost);
                let refill_b = b.split_off_front(cost);
                session.replenish_auth(&refill_a, &refill_b);
                alice.extend_from(&a);
                bob.extend_from(&b);
            }
            Err(cause) => {
                summary.sessions += 1;
                summary.raw_length += n_raw;
                if matches!(cause, AbortCause::QberExceeded { .. }) {
                    let (len, errors) = session.last_sample();
                    summary.sample_length += len;
                    summary.sample_errors += errors;
                }
                let kind = TraceKind::QkeAbort { cause: cause.clone() };
                push_record(records, rng, ExactTime::ZERO, ActorId::Engine, kind, Vec::new());
                summary.aborted = Some(cause);
                return Ok((None, summary));
            }
        }
    }
    session.close();
    let (alice, bob) = (&alice.bits()[..need], &bob.bits()[..need]);
    let mismatched = alice.iter().zip(bob).filter(|(a, b)| a != b).count();
    ready(records, rng, mismatched);
    Ok((
        Some((BitString::from_bits(alice.to_vec()), BitString::from_bits(bob.to_vec()))),
        summary,
    ))
}

impl<'a> Engine<'a> {
    fn new(
        sc: &'a Scenario,
        rng: CountingRng,
        mut station_key: BitString,
        mut tag_key: BitString,
        records: Option<Vec<TraceRecord>>,
    ) -> Self {
        let geom = &sc.geometry;
        let stations = geom.stations().len();
        let rounds = sc.protocol.rounds as usize;
        let station_bits = station_key.split_off_front(sc.tag_bits());
        let tag_bits = tag_key.split_off_front(sc.tag_bits());
        let mac_key = sc.protocol.authenticate_messages.then_some(station_key);
        let tag_mac_key = sc.protocol.authenticate_messages.then_some(tag_key);
        let (store, blocks, verifier) = match sc.protocol.mode {
            Mode::OneDim => (
                KeyStore::new(tag_bits),
                BlockKeySet::default(),
                Verifier::Line {
                    key: station_bits,
                    bits: Vec::with_capacity(rounds),
                },
            ),
            Mode::ThreeDim => (
                KeyStore::new(BitString::new()),
                BlockKeySet::from_stream(&tag_bits, stations),
                Verifier::Blocks {
                    keys: BlockKeySet::from_stream(&station_bits, stations),
                    requests: Vec::with_capacity(rounds),
                    rounds: Vec::with_capacity(rounds),
                },
            ),
        };
        let strategy = sc.adversary.strategy.build();
        let mut tag = Tag::new(store, blocks, tag_mac_key, stations);
        tag.set_powered(strategy.tag_powered());
        Engine {
            sc,
            geom,
            rng,
            now: ExactTime::ZERO,
            queue: BinaryHeap::with_capacity(8 * rounds * stations),
            pending: Vec::with_capacity(8 * rounds * stations),
            free: Vec::new(),
            seq: 0,
            ledger: InfoLedger::new(),
            strategy,
            tag,
            site: TagSite {
                position: geom.tag(),
                epoch: 0,
                enclosed: false,
                moved_at: ExactTime::ZERO,
            },
            jams: Vec::new(),
            mac_key,
            slots: MacSlots { stations },
            verifier,
            observed: vec![vec![Vec::new(); stations]; rounds],
            verdicts: Vec::with_capacity(rounds),
            decision: None,
            injections: 0,
            records,
        }
    }

    fn record(&mut self, actor: ActorId, kind: TraceKind, data: Vec<DatumId>) {
        push_record(&mut self.records, &self.rng, self.now, actor, kind, data);
    }

    fn schedule(&mut self, at: ExactTime, actor: ActorId, event: Event) {
        self.seq += 1;
        let slot = match self.free.pop() {
            Some(i) => {
                self.pending[i] = Some(event);
                i
            }
            None => {
                self.pending.push(Some(event));
                self.pending.len() - 1
            }
        };
        self.queue.push(Reverse(Queued {
            at,
            actor,
            seq: self.seq,
            slot,
        }));
    }

    fn sign(&self, payload: &[u8], slot: usize) -> Option<crate::keys::MacTag> {
        self.mac_key
            .as_ref()
            .and_then(|k| crate::keys::mac_sign(payload, k, slot).ok())
    }

    fn start(&mut self) -> Result<(), SimError> {
        let cfg = &self.sc.protocol;
        match cfg.mode {
            Mode::OneDim => {
                let sched = schedule_challenges_1d(self.geom, cfg, &mut self.rng);
                for pair in sched.chunks(2) {
                    if let Verifier::Line { bits, .. } = &mut self.verifier {
                        bits.push([pair[0].bit, pair[1].bit]);
                    }
                }
                for mut ch in sched {
                    ch.mac = self.sign(&ch.mac_payload(), self.slots.challenge(ch.round, ch.origin));
                    self.schedule(
                        ch.sent.t,
                        ActorId::Station(ch.origin.0),
                        Event::StationSend(Message::Challenge(ch)),
                    );
                }
            }
            Mode::ThreeDim => {
                let sched = schedule_requests(self.geom, cfg, &mut self.rng);
                let stations = self.geom.stations().len();
                for mut req in sched {
                    req.mac = self.sign(&req.mac_payload(), self.slots.challenge(req.block, req.station));
                    if let Verifier::Blocks { requests, .. } = &mut self.verifier {
                        if req.station.index() == 0 {
                            requests.push(Vec::with_capacity(stations));
                        }
                        requests.last_mut().expect("block").push(req);
                    }
                    self.schedule(
                        req.sent.t,
                        ActorId::Station(req.station.0),
                        Event::StationSend(Message::BlockRequest(req)),
                    );
                }
            }
        }
        for round in 0..cfg.rounds {
            let at = cfg.verify_deadline(self.geom, round);
            self.schedule(at, ActorId::Verifier, Event::Verify { round });
        }
        self.with_adversary(|s, ctx| s.start(ctx))
    }

    fn run_queue(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(q)) = self.queue.pop() {
            if q.at < self.now {
                return Err(SimError::Invariant(format!(
                    "event at {} popped after {}",
                    q.at, self.now
                )));
            }
            self.now = q.at;
            let event = self.pending[q.slot].take().expect("queued event present");
            self.free.push(q.slot);
            self.dispatch(q.actor, event)?;
            if self.decision.is_some() {
                break;
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, actor: ActorId, event: Event) -> Result<(), SimError> {
        match event {
            Event::StationSend(message) => self.station_send(actor, message),
            Event::Deliver { message, to, epoch } => self.deliver(actor, message, to, epoch),
            Event::PairTimeout { round, armed_at } => {
                self.record(ActorId::Tag, TraceKind::PairTimeout { round }, Vec::new());
                let reaction = self.tag.on_pair_timeout(round, armed_at);
                self.tag_reacted(reaction)
            }
            Event::Verify { round } => {
                self.verify(round);
                Ok(())
            }
            Event::AdversaryEmit(inj) => self.adversary_emit(inj),
            Event::Wake { token } => self.with_adversary(|s, ctx| s.wake(token, ctx)),
            Event::Relocate { to, enclose } => {
                self.site = TagSite {
                    position: to,
                    epoch: self.site.epoch + 1,
                    enclosed: enclose,
                    moved_at: self.now,
                };
                self.record(ActorId::Engine, TraceKind::Relocate { to, enclose }, Vec::new());
                Ok(())
            }
        }
    }

    fn datum_of(message: &Message) -> DatumId {
        match message {
            Message::Challenge(c) => DatumId::Challenge {
                station: c.origin.0,
                round: c.round,
            },
            Message::Response(r) => DatumId::Response { round: r.round },
            Message::BlockRequest(r) => DatumId::Request {
                station: r.station.0,
                block: r.block,
            },
            Message::BlockResponse(r) => DatumId::Answer {
                station: r.station.0,
                block: r.block,
            },
        }
    }

    /// Makes an honest emission public: ledger entry, trace record,
    /// Eve's observation.
    fn publish(&mut self, actor: ActorId, message: Message, kind: TraceKind) -> Result<(), SimError> {
        let datum = Self::datum_of(&message);
        let origin = message.event();
        self.ledger.record(datum, origin);
        let data = if self.records.is_some() {
            vec![datum]
        } else {
            Vec::new()
        };
        self.record(actor, kind, data);
        let obs = Observation { datum, origin, message };
        self.with_adversary(|s, ctx| s.observe(&obs, ctx))
    }

    fn station_send(&mut self, actor: ActorId, message: Message) -> Result<(), SimError> {
        let from = message.event().x;
        if self.site.enclosed {
            self.record(
                actor,
                TraceKind::Dropped {
                    message,
                    to: Target::Tag,
                    reason: DropReason::Enclosed,
                },
                Vec::new(),
            );
        } else {
            let at = self.now + self.geom.delay(&from, &self.site.position);
            let epoch = self.site.epoch;
            self.schedule(
                at,
                ActorId::Tag,
                Event::Deliver {
                    message,
                    to: Target::Tag,
                    epoch,
                },
            );
        }
        self.publish(actor, message, TraceKind::Send { message })
    }

    fn jammed(&self, target: Target) -> bool {
        self.jams.iter().any(|(t, until)| *t == target && self.now < *until)
    }

    fn deliver(&mut self, actor: ActorId, message: Message, to: Target, epoch: u32) -> Result<(), SimError> {
        let drop = if self.jammed(to) {
            Some(DropReason::Jammed)
        } else if to == Target::Tag && epoch != self.site.epoch {
            Some(DropReason::Missed)
        } else {
            None
        };
        if let Some(reason) = drop {
            self.record(actor, TraceKind::Dropped { message, to, reason }, Vec::new());
            return Ok(());
        }
        let place = match to {
            Target::Tag => self.site.position,
            Target::Station(s) => self.geom.station(s as usize),
        };
        let at = SpacetimeEvent::new(self.now, place);
        self.record(actor, TraceKind::Deliver { message, to, at }, Vec::new());
        match to {
            Target::Tag => {
                let reaction = match &message {
                    Message::Challenge(ch) => self.tag.on_challenge(ch, at, self.sc.protocol.pair_wait()),
                    Message::BlockRequest(req) => self.tag.on_block_request(req, at),
                    _ => TagReaction::Nothing,
                };
                self.tag_reacted(reaction)
            }
            Target::Station(s) => {
                self.station_receive(s, &message);
                Ok(())
            }
        }
    }

    fn station_receive(&mut self, s: u8, message: &Message) {
        let (round, bit, dest, slot) = match message {
            Message::Response(r) if self.sc.protocol.mode == Mode::OneDim => (
                r.round,
                r.bit,
                r.destination,
                self.slots.response(r.round, r.destination),
            ),
            Message::BlockResponse(r) if self.sc.protocol.mode == Mode::ThreeDim => {
                (r.block, r.bit, r.station, self.slots.response(r.block, r.station))
            }
            _ => return,
        };
        if dest.0 != s || round >= self.sc.protocol.rounds {
            return;
        }
        let mac_ok = self.mac_key.as_ref().map(|k| {
            message
                .mac()
                .is_some_and(|t| t.key_offset == slot as u64 && mac_verify(&message.mac_payload(), &t, k))
        });
        self.observed[round as usize][s as usize].push(ObservedResponse {
            bit,
            arrival: self.now,
            mac_ok,
        });
    }

    fn tag_reacted(&mut self, reaction: TagReaction) -> Result<(), SimError> {
        let outcome = match &reaction {
            TagReaction::Respond {
                round,
                key_index,
                responses,
            } => TagOutcome::Respond {
                round: *round,
                key_index: *key_index,
                bit: responses[0].bit,
            },
            TagReaction::Answer(a) => TagOutcome::Answer {
                station: a.station.0,
                block: a.block,
                bit: a.bit,
            },
            TagReaction::Waiting { round, wake_at } => TagOutcome::Waiting {
                round: *round,
                wake_at: *wake_at,
            },
            TagReaction::Burned { round, reason } => TagOutcome::Burned {
                round: *round,
                reason: *reason,
            },
            TagReaction::Depleted { round } => TagOutcome::Depleted { round: *round },
            TagReaction::MacRejected => TagOutcome::MacRejected,
            TagReaction::PassThrough => TagOutcome::PassThrough,
            TagReaction::Nothing => TagOutcome::Nothing,
        };
        self.record(ActorId::Tag, TraceKind::Tag { outcome }, Vec::new());
        match reaction {
            TagReaction::Respond { responses, .. } => {
                for r in responses {
                    self.tag_emit(Message::Response(r))?;
                }
            }
            TagReaction::Answer(a) => self.tag_emit(Message::BlockResponse(a))?,
            TagReaction::Waiting { round, wake_at } => {
                let armed_at = self.now;
                self.schedule(wake_at, ActorId::Tag, Event::PairTimeout { round, armed_at });
            }
            _ => {}
        }
        Ok(())
    }

    fn tag_emit(&mut self, message: Message) -> Result<(), SimError> {
        let dest = match &message {
            Message::Response(r) => r.destination,
            Message::BlockResponse(r) => r.station,
            _ => return Ok(()),
        };
        if !self.site.enclosed {
            let at = self.now + self.geom.delay(&self.site.position, &self.geom.station(dest.index()));
            let to = Target::Station(dest.0);
            self.schedule(at, ActorId::Station(dest.0), Event::Deliver { message, to, epoch: 0 });
        }
        self.publish(ActorId::Tag, message, TraceKind::Emit { message })
    }

    fn adversary_emit(&mut self, mut inj: Injection) -> Result<(), SimError> {
        validate_injection(&inj.refs, &inj.emit, &self.ledger, self.geom)?;
        inj.message.set_event(inj.emit);
        self.injections += 1;
        self.record(
            ActorId::Adversary,
            TraceKind::Inject {
                emit: inj.emit,
                target: inj.target,
                refs: inj.refs.clone(),
                message: inj.message,
            },
            Vec::new(),
        );
        let (place, actor) = match inj.target {
            Target::Tag => (self.site.position, ActorId::Tag),
            Target::Station(s) => {
                if s as usize >= self.geom.stations().len() {
                    return Err(SimError::Invariant(format!("injection aimed at unknown station {s}")));
                }
                (self.geom.station(s as usize), ActorId::Station(s))
            }
        };
        let at = self.now + self.geom.delay(&inj.emit.x, &place);
        let epoch = self.site.epoch;
        self.schedule(
            at,
            actor,
            Event::Deliver {
                message: inj.message,
                to: inj.target,
                epoch,
            },
        );
        Ok(())
    }

    fn with_adversary(&mut self, f: impl FnOnce(&mut dyn Strategy, &mut AdversaryCtx<'_>)) -> Result<(), SimError> {
        let actions = {
            let mut ctx = AdversaryCtx::new(
                self.now,
                self.geom,
                &self.sc.protocol,
                &self.ledger,
                self.site.position,
                &mut self.rng as &mut dyn RngCore,
            );
            f(self.strategy.as_mut(), &mut ctx);
            ctx.into_actions()
        };
        for action in actions {
            self.apply(action)?;
        }
        Ok(())
    }

    fn apply(&mut self, action: Action) -> Result<(), SimError> {
        let caps = self.sc.adversary.capabilities;
        match action {
            Action::Inject(inj) => {
                if inj.emit.t < self.now {
                    return Err(CausalityViolation::InThePast {
                        at: inj.emit.t,
                        now: self.now,
                    }
                    .into());
                }
                self.schedule(inj.emit.t, ActorId::Adversary, Event::AdversaryEmit(inj));
            }
            Action::Relocate { at, to, enclose } => {
                if at < self.now {
                    return Err(CausalityViolation::InThePast { at, now: self.now }.into());
                }
                if to.dim() != self.geom.dimension() {
                    return Err(
                        CapabilityViolation::Invalid(format!("relocation target has {} components", to.dim())).into(),
                    );
                }
                caps.check_move(&self.site.position, &to, self.site.moved_at, at)?;
                self.schedule(at, ActorId::Engine, Event::Relocate { to, enclose });
            }
            Action::Jam { target, until } => {
                if !caps.can_drop_messages {
                    return Err(CapabilityViolation::DropNotAllowed.into());
                }
                self.jams.push((target, until));
                self.record(ActorId::Adversary, TraceKind::Jam { target, until }, Vec::new());
            }
            Action::Wake { at, token } => {
                if at < self.now {
                    return Err(CausalityViolation::InThePast { at, now: self.now }.into());
                }
                self.schedule(at, ActorId::Adversary, Event::Wake { token });
            }
        }
        Ok(())
    }

    fn verify(&mut self, round: u64) {
        let cfg = &self.sc.protocol;
        let geom = self.geom;
        let observed = std::mem::take(&mut self.observed[round as usize]);
        let (verdict, bounds) = match &mut self.verifier {
            Verifier::Line { key, bits } => {
                let [a, b] = bits[round as usize];
                let expected_bit = key.get(key_index(round, a, b) as usize).unwrap_or(false);
                let expected: Vec<ExactTime> = (0..geom.stations().len())
                    .map(|s| cfg.expected_response(geom, round, s))
                    .collect();
                let pair_time = cfg.arrival_time(geom, round);
                let v = verify_round(
                    round,
                    pair_time,
                    expected_bit,
                    &expected,
                    &observed,
                    cfg.timing_tolerance,
                );
                (v, None)
            }
            Verifier::Blocks { keys, requests, rounds } => {
                let mut stations = Vec::new();
                let mut bounds = Vec::new();
                for (s, req) in requests[round as usize].iter().enumerate() {
                    let pos = geom.station(s);
                    let expected_bit = keys.peek(s, round, req.which).unwrap_or(false);
                    let (v, b) = verify_block_station(
                        StationId(s as u8),
                        expected_bit,
                        geom.delay(&pos, &geom.tag()) * 2,
                        req.sent.t,
                        &observed[s],
                        cfg.timing_tolerance,
                        geom.c(),
                    );
                    stations.push(v);
                    bounds.push(b);
                }
                let pass = stations.iter().all(StationVerdict::pass);
                let v = RoundVerdict {
                    round,
                    pair_time: cfg.arrival_time(geom, round),
                    stations,
                    pass,
                };
                rounds.push(BlockRound {
                    verdict: v.clone(),
                    bounds: bounds.clone(),
                });
                (v, Some(bounds))
            }
        };
        let pass = verdict.pass;
        self.verdicts.push(verdict.clone());
        self.record(ActorId::Verifier, TraceKind::Verdict { verdict, bounds }, Vec::new());
        if !pass || round + 1 == cfg.rounds {
            let decision = self.decide();
            self.record(
                ActorId::Verifier,
                TraceKind::Decision {
                    decision: decision.clone(),
                },
                Vec::new(),
            );
            self.decision = Some(decision);
        }
    }

    fn decide(&self) -> AuthDecision {
        match &self.verifier {
            Verifier::Line { .. } => decide(&self.verdicts, &self.sc.protocol),
            Verifier::Blocks { rounds, .. } => authenticate_3d(rounds, self.geom, &self.sc.protocol),
        }
    }
}

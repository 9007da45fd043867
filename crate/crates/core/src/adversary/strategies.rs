use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AdversaryCtx, DatumId, Injection, Observation, Strategy, Target};
use crate::protocol::{BlockRequest, BlockResponse, ChallengeMessage, Message, Mode, ResponseMessage, StationId};
use crate::spacetime::{Position, SpacetimeEvent};
use crate::time::ExactTime;

/// How a relocated tag is connected back to the stations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayMode {
    /// Forward both challenges once both reach the new position, and
    /// forward the answers straight away.
    PureRelay,
    /// Supply a guessed bit for any challenge that cannot reach the new
    /// position in time, and hold back answers so each arrives on schedule.
    InputInjection,
}

/// Strategy selection as it appears in scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
#[derive(Default)]
pub enum StrategySpec {
    #[default]
    Passive,
    /// Tag switched off; broadcast a guessed bit each round from
    /// `emit_point` (default: the claimed tag position).
    GuessSpoofer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        emit_point: Option<Position>,
    },
    /// Move the tag by `displacement` before round 0 and relay to it.
    Relocation { displacement: Position, mode: RelayMode },
    /// Move the tag by `displacement` before round 0 and leave it to
    /// answer on its own.
    Displace { displacement: Position },
    /// Probe the switched-off tag, then guess.
    OffTagPrecompute { probes: u32 },
    /// Deliberately uses a challenge bit outside its light cone.
    FtlProbe,
    /// Tag switched off; answer every block request from `point`.
    OutsideResponder { point: Position },
}

impl StrategySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::Passive => "passive",
            StrategySpec::GuessSpoofer { .. } => "guess_spoofer",
            StrategySpec::Relocation { .. } => "relocation",
            StrategySpec::Displace { .. } => "displace",
            StrategySpec::OffTagPrecompute { .. } => "off_tag_precompute",
            StrategySpec::FtlProbe => "ftl_probe",
            StrategySpec::OutsideResponder { .. } => "outside_responder",
        }
    }

    pub fn build(&self) -> Box<dyn Strategy> {
        match self {
            StrategySpec::Passive => Box::new(Passive),
            StrategySpec::GuessSpoofer { emit_point } => Box::new(GuessSpoofer::new(*emit_point)),
            StrategySpec::Relocation { displacement, mode } => Box::new(Relocation::new(*displacement, *mode)),
            StrategySpec::Displace { displacement } => Box::new(Displace {
                displacement: *displacement,
            }),
            StrategySpec::OffTagPrecompute { probes } => Box::new(OffTagPrecompute::new(*probes)),
            StrategySpec::FtlProbe => Box::new(FtlProbe::default()),
            StrategySpec::OutsideResponder { point } => Box::new(OutsideResponder { point: *point }),
        }
    }

    /// Positions the strategy carries, for dimension checks.
    pub fn positions(&self) -> Vec<(&'static str, Position)> {
        match self {
            StrategySpec::GuessSpoofer { emit_point: Some(p) } => vec![("emit_point", *p)],
            StrategySpec::Relocation { displacement, .. } | StrategySpec::Displace { displacement } => {
                vec![("displacement", *displacement)]
            }
            StrategySpec::OutsideResponder { point } => vec![("point", *point)],
            _ => Vec::new(),
        }
    }
}

/// Does nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct Passive;

impl Strategy for Passive {
    fn name(&self) -> &'static str {
        "passive"
    }
}

/// Earliest emission from `p` that makes every station's answer arrive no
/// earlier than expected.
fn emit_time_1d(ctx: &AdversaryCtx<'_>, round: u64, p: &Position) -> ExactTime {
    (0..ctx.geom.stations().len())
        .map(|s| ctx.cfg.expected_response(ctx.geom, round, s) - ctx.geom.delay(p, &ctx.geom.station(s)))
        .max()
        .unwrap_or(ExactTime::ZERO)
}

#[derive(Clone, Debug)]
pub struct GuessSpoofer {
    emit_point: Option<Position>,
}

impl GuessSpoofer {
    pub fn new(emit_point: Option<Position>) -> Self {
        GuessSpoofer { emit_point }
    }

    fn broadcast_guesses(&self, ctx: &mut AdversaryCtx<'_>) {
        let p = self.emit_point.unwrap_or(ctx.geom.tag());
        let stations = ctx.geom.stations().len();
        for round in 0..ctx.cfg.rounds {
            match ctx.cfg.mode {
                Mode::OneDim => {
                    let at = SpacetimeEvent::new(emit_time_1d(ctx, round, &p).max(ctx.now), p);
                    let bit = ctx.coin();
                    for s in 0..stations {
                        ctx.inject(Injection {
                            emit: at,
                            message: Message::Response(ResponseMessage {
                                round,
                                bit,
                                emitted: at,
                                destination: StationId(s as u8),
                                mac: None,
                            }),
                            target: Target::Station(s as u8),
                            refs: Vec::new(),
                        });
                    }
                }
                Mode::ThreeDim => {
                    let target = ctx.cfg.arrival_time(ctx.geom, round);
                    for s in 0..stations {
                        let pos = ctx.geom.station(s);
                        let t = target + ctx.geom.delay(&ctx.geom.tag(), &pos) - ctx.geom.delay(&p, &pos);
                        let at = SpacetimeEvent::new(t.max(ctx.now), p);
                        let bit = ctx.coin();
                        ctx.inject(Injection {
                            emit: at,
                            message: Message::BlockResponse(BlockResponse {
                                station: StationId(s as u8),
                                block: round,
                                bit,
                                emitted: at,
                                mac: None,
                            }),
                            target: Target::Station(s as u8),
                            refs: Vec::new(),
                        });
                    }
                }
            }
        }
    }
}

impl Strategy for GuessSpoofer {
    fn name(&self) -> &'static str {
        "guess_spoofer"
    }

    fn tag_powered(&self) -> bool {
        false
    }

    fn start(&mut self, ctx: &mut AdversaryCtx<'_>) {
        self.broadcast_guesses(ctx);
    }
}

/// Probes the switched-off tag with made-up challenges, then falls back to
/// guessing.
#[derive(Clone, Debug)]
pub struct OffTagPrecompute {
    probes: u32,
    guesser: GuessSpoofer,
}

impl OffTagPrecompute {
    pub fn new(probes: u32) -> Self {
        OffTagPrecompute {
            probes,
            guesser: GuessSpoofer::new(None),
        }
    }
}

impl Strategy for OffTagPrecompute {
    fn name(&self) -> &'static str {
        "off_tag_precompute"
    }

    fn tag_powered(&self) -> bool {
        false
    }

    fn start(&mut self, ctx: &mut AdversaryCtx<'_>) {
        let at = SpacetimeEvent::new(ctx.now, ctx.geom.tag());
        for k in 0..self.probes {
            let bit = ctx.coin();
            let round = (k / 2) as u64;
            let station = StationId((k % 2) as u8);
            let message = match ctx.cfg.mode {
                Mode::OneDim => Message::Challenge(ChallengeMessage {
                    round,
                    bit,
                    origin: station,
                    sent: at,
                    mac: None,
                }),
                Mode::ThreeDim => Message::BlockRequest(BlockRequest {
                    station,
                    block: round,
                    which: bit,
                    sent: at,
                    mac: None,
                }),
            };
            ctx.inject(Injection {
                emit: at,
                message,
                target: Target::Tag,
                refs: Vec::new(),
            });
        }
        self.guesser.broadcast_guesses(ctx);
    }
}

#[derive(Clone, Debug)]
struct Plan {
    challenges: Vec<ChallengeMessage>,
    /// Bits actually fed to the tag, per side, when any were guessed.
    guessed: Option<[bool; 2]>,
}

/// Scenario II: carry the tag off by `displacement`, seal it, and connect
/// it back to the stations through Eve's own relays.
#[derive(Clone, Debug)]
pub struct Relocation {
    displacement: Position,
    mode: RelayMode,
    new_position: Option<Position>,
    plans: BTreeMap<u64, Plan>,
}

impl Relocation {
    pub fn new(displacement: Position, mode: RelayMode) -> Self {
        Relocation {
            displacement,
            mode,
            new_position: None,
            plans: BTreeMap::new(),
        }
    }

    fn place(&self, ctx: &AdversaryCtx<'_>) -> Position {
        self.new_position.unwrap_or(ctx.tag_position)
    }

    fn on_pair(&mut self, round: u64, ctx: &mut AdversaryCtx<'_>) {
        let p = self.place(ctx);
        let plan = self.plans.get_mut(&round).expect("plan");
        let avail: Vec<ExactTime> = plan
            .challenges
            .iter()
            .map(|c| c.sent.t + ctx.geom.delay(&c.sent.x, &p))
            .collect();
        let joint = avail.iter().copied().max().unwrap_or(ctx.now);
        let emit_t = match self.mode {
            RelayMode::PureRelay => joint,
            RelayMode::InputInjection => emit_time_1d_min(ctx, round, &p).max(ctx.now),
        };
        let at = SpacetimeEvent::new(emit_t, p);
        let mut fed = [false; 2];
        let mut any_guess = false;
        for (c, &ready) in plan.challenges.iter().zip(&avail) {
            let side = c.origin.index().min(1);
            let (message, refs) = if ready <= emit_t {
                fed[side] = c.bit;
                (
                    *c,
                    vec![DatumId::Challenge {
                        station: c.origin.0,
                        round,
                    }],
                )
            } else {
                any_guess = true;
                let guess = ctx.coin();
                fed[side] = guess;
                (
                    ChallengeMessage {
                        bit: guess,
                        mac: None,
                        ..*c
                    },
                    Vec::new(),
                )
            };
            ctx.inject(Injection {
                emit: at,
                message: Message::Challenge(message),
                target: Target::Tag,
                refs,
            });
        }
        if any_guess {
            plan.guessed = Some(fed);
            ctx.wake_at(joint.max(emit_t), round);
        }
    }
}

/// Earliest emission from `p` that lets some station's answer arrive on
/// time; the others are held back.
fn emit_time_1d_min(ctx: &AdversaryCtx<'_>, round: u64, p: &Position) -> ExactTime {
    (0..ctx.geom.stations().len())
        .map(|s| ctx.cfg.expected_response(ctx.geom, round, s) - ctx.geom.delay(p, &ctx.geom.station(s)))
        .min()
        .unwrap_or(ExactTime::ZERO)
}

impl Strategy for Relocation {
    fn name(&self) -> &'static str {
        "relocation"
    }

    fn start(&mut self, ctx: &mut AdversaryCtx<'_>) {
        let to = ctx.tag_position.add(&self.displacement);
        let at = before_first_send(ctx);
        self.new_position = Some(to);
        ctx.relocate_tag(at, to, true);
    }

    fn observe(&mut self, obs: &Observation, ctx: &mut AdversaryCtx<'_>) {
        match obs.message {
            Message::Challenge(ch) => {
                let plan = self.plans.entry(ch.round).or_insert(Plan {
                    challenges: Vec::new(),
                    guessed: None,
                });
                plan.challenges.push(ch);
                if plan.challenges.len() == 2 {
                    self.on_pair(ch.round, ctx);
                }
            }
            Message::Response(r) => {
                let dest = r.destination;
                let station = ctx.geom.station(dest.index());
                let emit_t = match self.mode {
                    RelayMode::PureRelay => obs.origin.t,
                    RelayMode::InputInjection => {
                        let due = ctx.cfg.expected_response(ctx.geom, r.round, dest.index())
                            - ctx.geom.delay(&obs.origin.x, &station);
                        due.max(obs.origin.t)
                    }
                };
                ctx.inject(Injection {
                    emit: SpacetimeEvent::new(emit_t, obs.origin.x),
                    message: obs.message,
                    target: Target::Station(dest.0),
                    refs: vec![DatumId::Response { round: r.round }],
                });
            }
            _ => {}
        }
    }

    /// Both true challenge bits have reached the tag's new position. A wrong
    /// guess is now known; Eve feeds the true pair, which the tag refuses.
    fn wake(&mut self, round: u64, ctx: &mut AdversaryCtx<'_>) {
        let Some(plan) = self.plans.get(&round) else { return };
        let Some(fed) = plan.guessed else { return };
        let truth_differs = plan.challenges.iter().any(|c| fed[c.origin.index().min(1)] != c.bit);
        if !truth_differs {
            return;
        }
        let at = SpacetimeEvent::new(ctx.now, self.place(ctx));
        for c in &plan.challenges {
            ctx.inject(Injection {
                emit: at,
                message: Message::Challenge(*c),
                target: Target::Tag,
                refs: vec![DatumId::Challenge {
                    station: c.origin.0,
                    round,
                }],
            });
        }
    }
}

/// Time at which the first station signal leaves, the latest moment a
/// move before round 0 can happen.
fn before_first_send(ctx: &AdversaryCtx<'_>) -> ExactTime {
    let tag = ctx.geom.tag();
    let latest = ctx
        .geom
        .stations()
        .iter()
        .map(|s| ctx.geom.delay(s, &tag))
        .max()
        .unwrap_or(ExactTime::ZERO);
    (ctx.cfg.first_arrival_time(ctx.geom) - latest).max(ctx.now)
}

/// Moves the tag once, in the open; the tag keeps its keys and answers
/// from where it now is.
#[derive(Clone, Debug)]
pub struct Displace {
    pub displacement: Position,
}

impl Strategy for Displace {
    fn name(&self) -> &'static str {
        "displace"
    }

    fn start(&mut self, ctx: &mut AdversaryCtx<'_>) {
        let to = ctx.tag_position.add(&self.displacement);
        let at = before_first_send(ctx);
        ctx.relocate_tag(at, to, false);
    }
}

/// Uses a station's first emission at a spacelike-separated event.
#[derive(Clone, Debug, Default)]
pub struct FtlProbe {
    fired: bool,
}

impl Strategy for FtlProbe {
    fn name(&self) -> &'static str {
        "ftl_probe"
    }

    fn observe(&mut self, obs: &Observation, ctx: &mut AdversaryCtx<'_>) {
        if self.fired {
            return;
        }
        let (round, far) = match obs.message {
            Message::Challenge(c) => (c.round, c.origin),
            Message::BlockRequest(r) => (r.block, r.station),
            _ => return,
        };
        // The station farthest from the datum's origin.
        let (far_idx, far_pos) = ctx
            .geom
            .stations()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != far.index())
            .max_by(|a, b| obs.origin.x.distance(a.1).total_cmp(&obs.origin.x.distance(b.1)))
            .map(|(i, p)| (i, *p))
            .expect("at least two stations");
        self.fired = true;
        let at = SpacetimeEvent::new(obs.origin.t, far_pos);
        let bit = ctx.coin();
        ctx.inject(Injection {
            emit: at,
            message: Message::Response(ResponseMessage {
                round,
                bit,
                emitted: at,
                destination: StationId(far_idx as u8),
                mac: None,
            }),
            target: Target::Station(far_idx as u8),
            refs: vec![obs.datum],
        });
    }
}

/// Tag switched off; each block request is answered with a guessed bit from
/// `point` as soon as the request can reach it.
#[derive(Clone, Debug)]
pub struct OutsideResponder {
    pub point: Position,
}

impl Strategy for OutsideResponder {
    fn name(&self) -> &'static str {
        "outside_responder"
    }

    fn tag_powered(&self) -> bool {
        false
    }

    fn observe(&mut self, obs: &Observation, ctx: &mut AdversaryCtx<'_>) {
        let Message::BlockRequest(req) = obs.message else {
            return;
        };
        let t = obs.origin.t + ctx.geom.delay(&obs.origin.x, &self.point);
        let at = SpacetimeEvent::new(t, self.point);
        let bit = ctx.coin();
        ctx.inject(Injection {
            emit: at,
            message: Message::BlockResponse(BlockResponse {
                station: req.station,
                block: req.block,
                bit,
                emitted: at,
                mac: None,
            }),
            target: Target::Station(req.station.0),
            refs: vec![obs.datum],
        });
    }
}

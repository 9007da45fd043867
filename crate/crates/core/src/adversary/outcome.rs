use serde::{Deserialize, Serialize};

use super::{AdversaryCapabilities, RelayMode, StrategySpec};
use crate::engine::{run_trials, Scenario, SimError, TrialSummary};
use crate::protocol::{Mode, ProtocolConfig};
use crate::spacetime::{in_simplex, Geometry, Position};
use crate::time::ExactTime;

/// Monte Carlo estimate of the spoofing probability p(N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpoofOutcome {
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    /// Analytic value when one is known.
    pub exact: Option<f64>,
    /// Trials whose failing round was caught by timing.
    pub delay_detections: u64,
    /// Trials whose failing round carried a wrong bit.
    pub wrong_bit_detections: u64,
}

impl SpoofOutcome {
    pub fn from_summary(s: &TrialSummary, exact: Option<f64>) -> Self {
        SpoofOutcome {
            trials: s.trials,
            successes: s.successes,
            p_hat: s.p_hat(),
            exact,
            delay_detections: s.delay_detections,
            wrong_bit_detections: s.wrong_bit_detections,
        }
    }

    /// Binomial standard deviation of `p_hat` around `p`.
    pub fn sigma(p: f64, trials: u64) -> f64 {
        (p * (1.0 - p) / trials as f64).sqrt()
    }

    /// `|p_hat - p| <= k sigma`; exact agreement is required when `sigma = 0`.
    pub fn within(&self, p: f64, k: f64) -> bool {
        (self.p_hat - p).abs() <= k * Self::sigma(p, self.trials)
    }
}

fn pow2(n: u64) -> f64 {
    0.5f64.powi(n.min(i32::MAX as u64) as i32)
}

/// Whether every station sees `offset(s)` within the tolerance.
fn on_time(geom: &Geometry, cfg: &ProtocolConfig, offset: impl Fn(&Position) -> ExactTime) -> bool {
    geom.stations().iter().all(|s| offset(s).abs() <= cfg.timing_tolerance)
}

/// Analytic spoofing probability of the scenario's strategy, where known.
///
/// Guessing from the claimed position passes a round with probability 1/2
/// per guessed bit. A relocated tag fed one guessed challenge passes a round
/// with probability 3/4: a right guess always passes, and a wrong guess
/// releases another key bit of the same round, which is independent of the
/// expected one and agrees with it half the time.
pub fn exact_spoof_probability(sc: &Scenario) -> Option<f64> {
    let geom = &sc.geometry;
    let cfg = &sc.protocol;
    let n = cfg.rounds;
    let tag = geom.tag();
    let macs = cfg.authenticate_messages;
    if sc.keys.eavesdrop_fraction > 0.0 {
        return None;
    }
    let hull_ok = match cfg.mode {
        Mode::OneDim => true,
        Mode::ThreeDim => in_simplex(&tag, geom.stations()).unwrap_or(false),
    };
    if !hull_ok {
        return Some(0.0);
    }
    let d = |p: &Position, q: &Position| geom.delay(p, q);
    let guess = |p: &Position| -> f64 {
        match cfg.mode {
            Mode::OneDim => {
                let lead = geom
                    .stations()
                    .iter()
                    .map(|s| d(&tag, s) - d(p, s))
                    .max()
                    .unwrap_or_default();
                let timely = on_time(geom, cfg, |s| lead + d(p, s) - d(&tag, s));
                if timely && !macs {
                    pow2(n)
                } else {
                    0.0
                }
            }
            Mode::ThreeDim if macs => 0.0,
            Mode::ThreeDim => pow2(n * geom.stations().len() as u64),
        }
    };
    match &sc.adversary.strategy {
        StrategySpec::Passive => Some(1.0),
        StrategySpec::GuessSpoofer { emit_point } => Some(guess(&emit_point.unwrap_or(tag))),
        StrategySpec::OffTagPrecompute { .. } => Some(guess(&tag)),
        StrategySpec::Relocation { displacement, mode } if cfg.mode == Mode::OneDim => {
            let moved = tag.add(displacement);
            // Offset, relative to T_i, at which challenge s reaches the new place.
            let reach = |s: &Position| d(s, &moved) - d(s, &tag);
            match mode {
                RelayMode::PureRelay => {
                    let joint = geom.stations().iter().map(reach).max().unwrap_or_default();
                    Some(if on_time(geom, cfg, |s| joint + d(&moved, s) - d(&tag, s)) {
                        1.0
                    } else {
                        0.0
                    })
                }
                RelayMode::InputInjection => {
                    let emit = geom
                        .stations()
                        .iter()
                        .map(|s| d(&tag, s) - d(&moved, s))
                        .min()
                        .unwrap_or_default();
                    let guessed = geom.stations().iter().filter(|s| reach(s) > emit).count() as u64;
                    if guessed == 0 {
                        Some(1.0)
                    } else if macs {
                        Some(0.0)
                    } else {
                        let per_round = (1.0 + pow2(guessed)) / 2.0;
                        Some(per_round.powi(n as i32))
                    }
                }
            }
        }
        _ => None,
    }
}

fn estimate(sc: &Scenario, trials: u64, seed: u64) -> Result<SpoofOutcome, SimError> {
    let summary = run_trials(sc, trials, seed, 0)?;
    Ok(SpoofOutcome::from_summary(&summary, exact_spoof_probability(sc)))
}

fn scenario(geom: &Geometry, cfg: &ProtocolConfig, strategy: StrategySpec, caps: AdversaryCapabilities) -> Scenario {
    Scenario::honest(geom.clone(), cfg.clone()).with_strategy(strategy, caps)
}

/// Scenario I with the tag switched off: broadcast a guessed bit each round
/// from `emit_point` (default: the claimed tag position).
pub fn attack_guess_spoofer(
    geom: &Geometry,
    cfg: &ProtocolConfig,
    emit_point: Option<Position>,
    trials: u64,
    seed: u64,
) -> Result<SpoofOutcome, SimError> {
    let sc = scenario(
        geom,
        cfg,
        StrategySpec::GuessSpoofer { emit_point },
        AdversaryCapabilities::default(),
    );
    estimate(&sc, trials, seed)
}

/// Scenario II: move the tag by `displacement` at speed at most
/// `speed_bound` and relay.
pub fn attack_relocation(
    geom: &Geometry,
    cfg: &ProtocolConfig,
    displacement: Position,
    mode: RelayMode,
    speed_bound: f64,
    trials: u64,
    seed: u64,
) -> Result<SpoofOutcome, SimError> {
    let sc = scenario(
        geom,
        cfg,
        StrategySpec::Relocation { displacement, mode },
        AdversaryCapabilities::movable(speed_bound),
    );
    estimate(&sc, trials, seed)
}

/// Relocation with guessed input on the side whose challenge comes too late.
pub fn attack_input_injection(
    geom: &Geometry,
    cfg: &ProtocolConfig,
    displacement: Position,
    speed_bound: f64,
    trials: u64,
    seed: u64,
) -> Result<SpoofOutcome, SimError> {
    attack_relocation(
        geom,
        cfg,
        displacement,
        RelayMode::InputInjection,
        speed_bound,
        trials,
        seed,
    )
}

/// Scenario I: probe the switched-off tag, then guess.
pub fn attack_off_tag_precompute(
    geom: &Geometry,
    cfg: &ProtocolConfig,
    probes: u32,
    trials: u64,
    seed: u64,
) -> Result<SpoofOutcome, SimError> {
    let sc = scenario(
        geom,
        cfg,
        StrategySpec::OffTagPrecompute { probes },
        AdversaryCapabilities::default(),
    );
    estimate(&sc, trials, seed)
}

//! Multilateration mode: per-station distance bounds from round-trip times,
//! combined into a position check inside the stations' simplex.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::verify::{decide, AuthDecision, FailureCause, RoundVerdict, StationVerdict};
use super::{ObservedResponse, ProtocolConfig, StationId};
use crate::keys::BlockKeySet;
use crate::spacetime::{in_simplex, multilaterate, Geometry, Position, SphereFix, TAU_GEO};
use crate::time::ExactTime;

/// Upper bound on the station-tag distance implied by one round trip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBound {
    pub rtt: ExactTime,
    /// `c * rtt / 2`, in distance-units.
    pub distance: f64,
}

impl DistanceBound {
    pub fn from_rtt(rtt: ExactTime, c: f64) -> Self {
        DistanceBound {
            rtt,
            distance: c * rtt.as_units() / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRound {
    pub verdict: RoundVerdict,
    pub bounds: Vec<Option<DistanceBound>>,
}

/// Verdict for one station's round trip.
///
/// Passes iff every answer carries the expected bit and its round trip is at
/// most the claimed-position round trip plus `2 * tolerance`, which is
/// `d <= |s - t_claimed| + tolerance * c` evaluated on the tick grid. A short
/// round trip is not a failure by itself; it shows up in multilateration.
pub(crate) fn verify_block_station(
    station: StationId,
    expected_bit: bool,
    expected_rtt: ExactTime,
    sent: ExactTime,
    observed: &[ObservedResponse],
    tolerance: ExactTime,
    c: f64,
) -> (StationVerdict, Option<DistanceBound>) {
    let mut verdict = StationVerdict {
        station,
        bit_correct: false,
        arrival_error: None,
        on_time: false,
        cause: Some(FailureCause::Missing),
    };
    let mut bound = None;
    for (i, resp) in observed.iter().enumerate() {
        let rtt = resp.arrival - sent;
        let excess = rtt - expected_rtt;
        let on_time = excess <= tolerance * 2;
        let cause = if !on_time {
            Some(FailureCause::Late)
        } else if resp.mac_ok == Some(false) {
            Some(FailureCause::MacFail)
        } else if resp.bit != expected_bit {
            Some(FailureCause::WrongBit)
        } else {
            None
        };
        if i == 0 {
            bound = Some(DistanceBound::from_rtt(rtt, c));
        }
        if i == 0 || (verdict.cause.is_none() && cause.is_some()) {
            verdict = StationVerdict {
                station,
                bit_correct: resp.bit == expected_bit,
                arrival_error: Some(excess.halve()),
                on_time,
                cause,
            };
        }
    }
    (verdict, bound)
}

/// One noiseless round of block requests against a tag physically at
/// `tag_at`, without adversary involvement.
pub fn run_3d_round<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &ProtocolConfig,
    tag_at: &Position,
    tag_keys: &mut BlockKeySet,
    verifier_keys: &BlockKeySet,
    block: u64,
    rng: &mut R,
) -> BlockRound {
    let target = cfg.arrival_time(geom, block);
    let mut stations = Vec::new();
    let mut bounds = Vec::new();
    for (s, pos) in geom.stations().iter().enumerate() {
        let which: bool = rng.random();
        let claimed = geom.delay(pos, &geom.tag());
        let sent = target - claimed;
        let observed: Vec<ObservedResponse> = tag_keys
            .release_block_bit(s, block, which)
            .ok()
            .map(|bit| {
                let out = geom.delay(pos, tag_at);
                let back = geom.delay(tag_at, pos);
                ObservedResponse {
                    bit,
                    arrival: sent + out + back,
                    mac_ok: None,
                }
            })
            .into_iter()
            .collect();
        let expected = verifier_keys.peek(s, block, which).unwrap_or(false);
        let (v, b) = verify_block_station(
            StationId(s as u8),
            expected,
            claimed * 2,
            sent,
            &observed,
            cfg.timing_tolerance,
            geom.c(),
        );
        stations.push(v);
        bounds.push(b);
    }
    let pass = stations.iter().all(StationVerdict::pass);
    BlockRound {
        verdict: RoundVerdict {
            round: block,
            pair_time: target,
            stations,
            pass,
        },
        bounds,
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// Final decision for the multilateration mode.
///
/// Rejects claims outside the stations' closed simplex, then requires every
/// round to pass at every station and the per-station median bounds to
/// multilaterate to the claimed position within `TAU_GEO`.
pub fn authenticate_3d(rounds: &[BlockRound], geom: &Geometry, cfg: &ProtocolConfig) -> AuthDecision {
    if !in_simplex(&geom.tag(), geom.stations()).unwrap_or(false) {
        return AuthDecision::rejected(None, FailureCause::OutsideHull, 0);
    }
    let verdicts: Vec<RoundVerdict> = rounds.iter().map(|r| r.verdict.clone()).collect();
    let decision = decide(&verdicts, cfg);
    if !decision.authenticated {
        return decision;
    }
    let n = rounds.len().min(cfg.rounds as usize);
    let mut medians = Vec::with_capacity(geom.stations().len());
    for s in 0..geom.stations().len() {
        let mut ds: Vec<f64> = rounds[..n]
            .iter()
            .filter_map(|r| r.bounds.get(s).copied().flatten())
            .map(|b| b.distance)
            .collect();
        match median(&mut ds) {
            Some(m) => medians.push(m),
            None => return AuthDecision::rejected(None, FailureCause::Missing, decision.rounds_completed),
        }
    }
    let matches = match multilaterate(geom.stations(), &medians) {
        Ok(SphereFix::Consistent(p)) => p.distance(&geom.tag()) <= TAU_GEO,
        _ => false,
    };
    if matches {
        decision
    } else {
        AuthDecision::rejected(None, FailureCause::PositionMismatch, decision.rounds_completed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::BitString;
    use crate::protocol::Mode;
    use crate::spacetime::distances_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(tag: Position) -> Geometry {
        let st = vec![
            Position::xyz(0.0, 0.0, 0.0),
            Position::xyz(12.0, 0.0, 0.0),
            Position::xyz(0.0, 12.0, 0.0),
            Position::xyz(0.0, 0.0, 12.0),
        ];
        Geometry::new(3, 1.0, st, tag, None).unwrap()
    }

    fn run(g: &Geometry, tag_at: Position, n: u64, seed: u64) -> Vec<BlockRound> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let key = BitString::random(8 * n as usize, &mut rng);
        let verifier = BlockKeySet::from_stream(&key, 4);
        let mut tag = verifier.clone();
        let cfg = ProtocolConfig::new(n, Mode::ThreeDim);
        (0..n)
            .map(|j| run_3d_round(g, &cfg, &tag_at, &mut tag, &verifier, j, &mut rng))
            .collect()
    }

    #[test]
    fn honest_bounds_equal_true_distances() {
        let claimed = Position::xyz(2.0, 3.0, 1.0);
        let g = geom(claimed);
        let rounds = run(&g, claimed, 20, 1);
        let exact = distances_from(&claimed, g.stations());
        for r in &rounds {
            assert!(r.verdict.pass);
            for (b, d) in r.bounds.iter().zip(&exact) {
                assert!((b.unwrap().distance - d).abs() < 1e-12);
            }
        }
        let cfg = ProtocolConfig::new(20, Mode::ThreeDim);
        assert!(authenticate_3d(&rounds, &g, &cfg).authenticated);
    }

    #[test]
    fn displaced_tag_fails_and_multilaterates_to_truth() {
        let claimed = Position::xyz(2.0, 3.0, 1.0);
        let truth = claimed.add(&Position::xyz(2.0, 0.0, 0.0));
        let g = geom(claimed);
        let rounds = run(&g, truth, 5, 2);
        let cfg = ProtocolConfig::new(5, Mode::ThreeDim);
        let d = authenticate_3d(&rounds, &g, &cfg);
        assert!(!d.authenticated);
        let ds: Vec<f64> = rounds[0].bounds.iter().map(|b| b.unwrap().distance).collect();
        let p = multilaterate(g.stations(), &ds).unwrap().position().unwrap();
        assert!(p.distance(&truth) < 1e-9);
        assert!(p.distance(&claimed) > 1.0);
    }

    #[test]
    fn outside_claim_rejected() {
        let outside = Position::xyz(20.0, 20.0, 20.0);
        let g = geom(outside);
        let rounds = run(&g, outside, 3, 3);
        let cfg = ProtocolConfig::new(3, Mode::ThreeDim);
        let d = authenticate_3d(&rounds, &g, &cfg);
        assert_eq!(d.first_failure.unwrap().cause, FailureCause::OutsideHull);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}

use serde::{Deserialize, Serialize};

use super::{ProtocolConfig, StationId};
use crate::time::ExactTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    WrongBit,
    Late,
    Early,
    Missing,
    MacFail,
    /// Rounds did not fit inside the window `N * tau`.
    WindowExceeded,
    /// Claimed position outside the hull of the stations.
    OutsideHull,
    /// Distance bounds do not multilaterate to the claimed position.
    PositionMismatch,
    /// Key expansion aborted before any round ran.
    KeyExchangeAborted,
}

/// A response as seen by a station.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedResponse {
    pub bit: bool,
    pub arrival: ExactTime,
    /// `None` when messages are not authenticated.
    pub mac_ok: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationVerdict {
    pub station: StationId,
    pub bit_correct: bool,
    /// Arrival minus expected arrival; `None` when nothing arrived.
    pub arrival_error: Option<ExactTime>,
    pub on_time: bool,
    pub cause: Option<FailureCause>,
}

impl StationVerdict {
    pub fn pass(&self) -> bool {
        self.cause.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundVerdict {
    pub round: u64,
    /// Target arrival time of the round's challenges at the tag.
    pub pair_time: ExactTime,
    pub stations: Vec<StationVerdict>,
    pub pass: bool,
}

impl RoundVerdict {
    pub fn first_cause(&self) -> Option<FailureCause> {
        self.stations.iter().find_map(|s| s.cause)
    }
}

/// Checks what one station received for one round.
///
/// Timing is checked first (it needs no key), then the MAC, then the bit.
/// Every received response must pass; identical duplicates are harmless.
pub fn verify_station(
    station: StationId,
    expected_bit: bool,
    expected_arrival: ExactTime,
    observed: &[ObservedResponse],
    tolerance: ExactTime,
) -> StationVerdict {
    let mut verdict = StationVerdict {
        station,
        bit_correct: false,
        arrival_error: None,
        on_time: false,
        cause: Some(FailureCause::Missing),
    };
    for (i, resp) in observed.iter().enumerate() {
        let err = resp.arrival - expected_arrival;
        let on_time = err.abs() <= tolerance;
        let cause = if err < -tolerance {
            Some(FailureCause::Early)
        } else if err > tolerance {
            Some(FailureCause::Late)
        } else if resp.mac_ok == Some(false) {
            Some(FailureCause::MacFail)
        } else if resp.bit != expected_bit {
            Some(FailureCause::WrongBit)
        } else {
            None
        };
        if i == 0 || (verdict.cause.is_none() && cause.is_some()) {
            verdict = StationVerdict {
                station,
                bit_correct: resp.bit == expected_bit,
                arrival_error: Some(err),
                on_time,
                cause,
            };
        }
    }
    verdict
}

/// Verdict for one round across all stations.
pub fn verify_round(
    round: u64,
    pair_time: ExactTime,
    expected_bit: bool,
    expected_arrivals: &[ExactTime],
    observed: &[Vec<ObservedResponse>],
    tolerance: ExactTime,
) -> RoundVerdict {
    let stations: Vec<StationVerdict> = expected_arrivals
        .iter()
        .zip(observed)
        .enumerate()
        .map(|(s, (&exp, obs))| verify_station(StationId(s as u8), expected_bit, exp, obs, tolerance))
        .collect();
    let pass = stations.iter().all(StationVerdict::pass);
    RoundVerdict {
        round,
        pair_time,
        stations,
        pass,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub round: Option<u64>,
    pub cause: FailureCause,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthDecision {
    pub authenticated: bool,
    pub rounds_completed: u64,
    pub first_failure: Option<Failure>,
}

impl AuthDecision {
    pub fn rejected(round: Option<u64>, cause: FailureCause, rounds_completed: u64) -> Self {
        AuthDecision {
            authenticated: false,
            rounds_completed,
            first_failure: Some(Failure { round, cause }),
        }
    }
}

/// N-round decision: the first N verdicts must all pass and their target
/// arrival times must span no more than `N * tau`. The first failure ends
/// the session.
pub fn decide(verdicts: &[RoundVerdict], cfg: &ProtocolConfig) -> AuthDecision {
    let considered = &verdicts[..verdicts.len().min(cfg.rounds as usize)];
    let mut completed = 0;
    for v in considered {
        if !v.pass {
            let cause = v.first_cause().unwrap_or(FailureCause::Missing);
            return AuthDecision::rejected(Some(v.round), cause, completed);
        }
        completed += 1;
    }
    if let (Some(first), Some(last)) = (considered.first(), considered.last()) {
        if last.pair_time - first.pair_time > cfg.delta_t() {
            return AuthDecision::rejected(Some(last.round), FailureCause::WindowExceeded, completed);
        }
    }
    AuthDecision {
        authenticated: completed == cfg.rounds,
        rounds_completed: completed,
        first_failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Mode;
    use proptest::prelude::*;

    fn t(u: i64) -> ExactTime {
        ExactTime::from_int_units(u)
    }

    fn obs(bit: bool, at: i64) -> ObservedResponse {
        ObservedResponse {
            bit,
            arrival: t(at),
            mac_ok: None,
        }
    }

    fn verdict(round: u64, pass: bool) -> RoundVerdict {
        let o = if pass { obs(true, 10) } else { obs(false, 10) };
        verify_round(round, t(round as i64), true, &[t(10)], &[vec![o]], ExactTime::ZERO)
    }

    #[test]
    fn station_examples() {
        let s = StationId(0);
        let v = verify_station(s, true, t(10), &[obs(true, 10)], ExactTime::ZERO);
        assert!(v.pass() && v.on_time && v.arrival_error == Some(ExactTime::ZERO));
        let v = verify_station(s, true, t(10), &[obs(false, 10)], ExactTime::ZERO);
        assert_eq!(v.cause, Some(FailureCause::WrongBit));
        let v = verify_station(s, true, t(10), &[obs(true, 14)], ExactTime::ZERO);
        assert_eq!((v.cause, v.arrival_error), (Some(FailureCause::Late), Some(t(4))));
        let v = verify_station(s, true, t(10), &[obs(true, 9)], ExactTime::ZERO);
        assert_eq!(v.cause, Some(FailureCause::Early));
        let v = verify_station(s, true, t(10), &[], ExactTime::ZERO);
        assert_eq!(v.cause, Some(FailureCause::Missing));
        let v = verify_station(s, true, t(10), &[obs(true, 11)], t(1));
        assert!(v.pass());
        let bad_mac = ObservedResponse {
            mac_ok: Some(false),
            ..obs(true, 10)
        };
        let v = verify_station(s, true, t(10), &[bad_mac], ExactTime::ZERO);
        assert_eq!(v.cause, Some(FailureCause::MacFail));
        // timing is reported ahead of the bit
        let v = verify_station(s, true, t(10), &[obs(false, 18)], ExactTime::ZERO);
        assert_eq!(v.cause, Some(FailureCause::Late));
        // a second, wrong response spoils an otherwise good round
        let v = verify_station(s, true, t(10), &[obs(true, 10), obs(false, 10)], ExactTime::ZERO);
        assert_eq!(v.cause, Some(FailureCause::WrongBit));
        let v = verify_station(s, true, t(10), &[obs(true, 10), obs(true, 10)], ExactTime::ZERO);
        assert!(v.pass());
    }

    #[test]
    fn decision_examples() {
        let cfg = ProtocolConfig::new(3, Mode::OneDim);
        let d = decide(&[verdict(0, true), verdict(1, true), verdict(2, true)], &cfg);
        assert!(d.authenticated);
        assert_eq!(d.rounds_completed, 3);
        let d = decide(&[verdict(0, true), verdict(1, false), verdict(2, true)], &cfg);
        assert!(!d.authenticated);
        assert_eq!(d.first_failure.unwrap().round, Some(1));
        assert_eq!(d.rounds_completed, 1);
        let zero = ProtocolConfig::new(0, Mode::OneDim);
        assert!(decide(&[], &zero).authenticated);
        assert!(!decide(&[verdict(0, true)], &cfg).authenticated);
    }

    #[test]
    fn window_exceeded() {
        let cfg = ProtocolConfig::new(2, Mode::OneDim);
        let mut late = verdict(1, true);
        late.pair_time = t(100);
        let d = decide(&[verdict(0, true), late], &cfg);
        assert_eq!(d.first_failure.unwrap().cause, FailureCause::WindowExceeded);
    }

    proptest! {
        #[test]
        fn failing_prefix_never_recovers(passes in prop::collection::vec(any::<bool>(), 1..20), extra in 0usize..5) {
            let n = passes.len() as u64;
            let cfg = ProtocolConfig::new(n, Mode::OneDim);
            let vs: Vec<_> = passes.iter().enumerate().map(|(i, &p)| verdict(i as u64, p)).collect();
            let d = decide(&vs, &cfg);
            if d.authenticated { prop_assert!(passes.iter().all(|p| *p)); }
            if !d.authenticated {
                let mut more = vs.clone();
                for k in 0..extra { more.push(verdict(n + k as u64, false)); }
                prop_assert!(!decide(&more, &cfg).authenticated);
            }
            prop_assert_eq!(d.authenticated, d.rounds_completed == n && d.first_failure.is_none());
        }
    }
}

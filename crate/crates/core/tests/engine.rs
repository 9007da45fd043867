use qtag_core::adversary::{AdversaryCapabilities, DatumId, RelayMode, StrategySpec};
use qtag_core::engine::{audit, replay, run, run_trials, Scenario, SimError, TraceKind};
use qtag_core::protocol::{FailureCause, Message, Mode, ProtocolConfig};
use qtag_core::spacetime::{Geometry, Position};
use qtag_core::time::ExactTime;

fn units(u: i64) -> ExactTime {
    ExactTime::from_int_units(u)
}

fn line(rounds: u64) -> Scenario {
    let mut cfg = ProtocolConfig::new(rounds, Mode::OneDim);
    cfg.first_arrival = Some(units(100));
    Scenario::honest(Geometry::line(0.0, 10.0, 5.0).unwrap(), cfg)
}

fn relocated(rounds: u64, dx: f64, mode: RelayMode) -> Scenario {
    line(rounds).with_strategy(
        StrategySpec::Relocation {
            displacement: Position::x(dx),
            mode,
        },
        AdversaryCapabilities::movable(0.1),
    )
}

#[test]
fn honest_run_has_zero_arrival_error() {
    let out = run(&line(50), 7).unwrap();
    assert!(out.decision.authenticated);
    assert_eq!(out.verdicts.len(), 50);
    for v in &out.verdicts {
        for s in &v.stations {
            assert_eq!(s.arrival_error, Some(ExactTime::ZERO));
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let sc = relocated(6, 2.0, RelayMode::InputInjection);
    let a = run(&sc, 99).unwrap().trace.unwrap().to_ndjson();
    let b = run(&sc, 99).unwrap().trace.unwrap().to_ndjson();
    assert_eq!(a, b);
    let c = run(&sc, 100).unwrap().trace.unwrap().to_ndjson();
    assert_ne!(a, c);
}

#[test]
fn pure_relay_is_late_by_four() {
    let out = run(&relocated(3, 2.0, RelayMode::PureRelay), 1).unwrap();
    assert!(!out.decision.authenticated);
    let first = &out.verdicts[0].stations[0];
    assert_eq!(first.cause, Some(FailureCause::Late));
    assert_eq!(first.arrival_error, Some(units(4)));
}

#[test]
fn guessing_from_nine_is_late_by_eight() {
    let sc = line(1).with_strategy(
        StrategySpec::GuessSpoofer {
            emit_point: Some(Position::x(9.0)),
        },
        AdversaryCapabilities::default(),
    );
    let out = run(&sc, 3).unwrap();
    let s0 = &out.verdicts[0].stations[0];
    assert_eq!(s0.cause, Some(FailureCause::Late));
    assert_eq!(s0.arrival_error, Some(units(8)));
}

#[test]
fn wrong_guess_burns_the_round() {
    let sc = relocated(1, 2.0, RelayMode::InputInjection);
    let burned = (0..200u64).any(|seed| {
        let trace = run(&sc, seed).unwrap().trace.unwrap();
        trace.records.iter().any(|r| {
            matches!(
                &r.kind,
                TraceKind::Tag {
                    outcome: qtag_core::engine::TagOutcome::Burned { .. }
                }
            )
        })
    });
    assert!(burned);
}

#[test]
fn ftl_probe_is_a_causality_error() {
    let sc = line(2).with_strategy(StrategySpec::FtlProbe, AdversaryCapabilities::default());
    for seed in 0..20 {
        assert!(matches!(run(&sc, seed), Err(SimError::Causality(_))));
    }
}

#[test]
fn relocation_needs_scenario_two() {
    let sc = line(2).with_strategy(
        StrategySpec::Relocation {
            displacement: Position::x(2.0),
            mode: RelayMode::PureRelay,
        },
        AdversaryCapabilities::default(),
    );
    assert!(matches!(run(&sc, 0), Err(SimError::Capability(_))));
}

#[test]
fn replay_and_audit_honest_trace() {
    let trace = run(&line(10), 5).unwrap().trace.unwrap();
    let report = replay(&trace).unwrap();
    assert!(report.is_ok(), "{report:?}");
    assert!(audit(&trace).unwrap().is_empty());
}

#[test]
fn replay_finds_tampered_record() {
    let mut trace = run(&line(4), 5).unwrap().trace.unwrap();
    let idx = trace
        .records
        .iter()
        .position(|r| matches!(r.kind, TraceKind::Emit { .. }))
        .unwrap();
    if let TraceKind::Emit {
        message: Message::Response(r),
    } = &mut trace.records[idx].kind
    {
        r.bit = !r.bit;
    }
    let report = replay(&trace).unwrap();
    assert_eq!(report.divergence.unwrap().index, idx);
}

#[test]
fn audit_catches_injection_moved_earlier() {
    let mut trace = run(&relocated(2, 2.0, RelayMode::InputInjection), 11)
        .unwrap()
        .trace
        .unwrap();
    assert!(audit(&trace).unwrap().is_empty());
    let inject = trace
        .records
        .iter_mut()
        .find(|r| matches!(&r.kind, TraceKind::Inject { refs, .. } if !refs.is_empty()))
        .expect("a relayed injection");
    if let TraceKind::Inject { emit, .. } = &mut inject.kind {
        emit.t = emit.t - units(1);
    }
    assert!(!audit(&trace).unwrap().is_empty());
}

#[test]
fn ledger_holds_challenges_at_their_stations() {
    let sc = line(3);
    let out = run(&sc, 2).unwrap();
    let mut challenges = 0;
    for (datum, origin) in out.ledger.entries() {
        if let DatumId::Challenge { station, round } = datum {
            challenges += 1;
            assert_eq!(origin.x, sc.geometry.station(station as usize));
            let delay = sc.geometry.delay(&origin.x, &sc.geometry.tag());
            assert_eq!(origin.t + delay, units(100 + round as i64));
        }
    }
    assert_eq!(challenges, 6);
}

#[test]
fn trials_are_seed_deterministic_across_workers() {
    let sc = line(3).with_strategy(
        StrategySpec::GuessSpoofer { emit_point: None },
        AdversaryCapabilities::default(),
    );
    let a = run_trials(&sc, 400, 42, 1).unwrap();
    let b = run_trials(&sc, 400, 42, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trace_roundtrips_through_ndjson() {
    let trace = run(&relocated(3, 2.0, RelayMode::InputInjection), 8)
        .unwrap()
        .trace
        .unwrap();
    let text = trace.to_ndjson();
    let back = qtag_core::engine::Trace::read_ndjson(text.as_bytes()).unwrap();
    assert_eq!(back, trace);
}

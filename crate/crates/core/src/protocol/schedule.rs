use rand::Rng;

use super::{BlockRequest, ChallengeMessage, ProtocolConfig, StationId};
use crate::spacetime::{Geometry, SpacetimeEvent};

/// Challenge bits and send events for every round, timed so that both bits
/// of round `i` reach the claimed tag position at exactly `T_i`.
///
/// Returned in round order, station 0 before station 1. MACs are attached by
/// the sender at emission time.
pub fn schedule_challenges_1d<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Vec<ChallengeMessage> {
    let mut out = Vec::with_capacity(2 * cfg.rounds as usize);
    for round in 0..cfg.rounds {
        let target = cfg.arrival_time(geom, round);
        for s in 0..2u8 {
            let station = geom.station(s as usize);
            let send = target - geom.delay(&station, &geom.tag());
            out.push(ChallengeMessage {
                round,
                bit: rng.random(),
                origin: StationId(s),
                sent: SpacetimeEvent::new(send, station),
                mac: None,
            });
        }
    }
    out
}

/// Block requests for the multilateration mode: each station asks for a
/// uniformly chosen bit of block `j`, sent so that it would reach the claimed
/// position at `T_j`.
pub fn schedule_requests<R: Rng + ?Sized>(geom: &Geometry, cfg: &ProtocolConfig, rng: &mut R) -> Vec<BlockRequest> {
    let stations = geom.stations().len();
    let mut out = Vec::with_capacity(stations * cfg.rounds as usize);
    for block in 0..cfg.rounds {
        let target = cfg.arrival_time(geom, block);
        for (s, pos) in geom.stations().iter().enumerate() {
            out.push(BlockRequest {
                station: StationId(s as u8),
                block,
                which: rng.random(),
                sent: SpacetimeEvent::new(target - geom.delay(pos, &geom.tag()), *pos),
                mac: None,
            });
        }
    }
    out
}

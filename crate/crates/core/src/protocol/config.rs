use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spacetime::Geometry;
use crate::time::ExactTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Two stations, paired challenge bits, one-of-four key release.
    #[serde(rename = "1d")]
    OneDim,
    /// `n + 1` stations with independent block requests and multilateration.
    #[serde(rename = "3d")]
    ThreeDim,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("round period must be positive")]
    BadPeriod,
    #[error("timing tolerance must be non-negative")]
    BadTolerance,
    #[error("mode {mode:?} does not fit a {dimension}-dimensional geometry")]
    ModeMismatch { mode: Mode, dimension: usize },
}

/// Timing and security parameters of one tagging session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Security parameter N: consecutive rounds that must pass.
    pub rounds: u64,
    /// Spacing between consecutive target arrivals at the tag.
    pub round_period: ExactTime,
    /// Allowed |arrival error| at each station.
    pub timing_tolerance: ExactTime,
    pub authenticate_messages: bool,
    pub mode: Mode,
    /// Target arrival time T_0 of round 0; defaults to the largest
    /// station-to-tag delay plus one time-unit.
    pub first_arrival: Option<ExactTime>,
}

impl ProtocolConfig {
    pub fn new(rounds: u64, mode: Mode) -> Self {
        ProtocolConfig {
            rounds,
            round_period: ExactTime::from_int_units(1),
            timing_tolerance: ExactTime::ZERO,
            authenticate_messages: false,
            mode,
            first_arrival: None,
        }
    }

    pub fn validate(&self, geom: &Geometry) -> Result<(), ProtocolError> {
        if self.round_period <= ExactTime::ZERO {
            return Err(ProtocolError::BadPeriod);
        }
        if self.timing_tolerance < ExactTime::ZERO {
            return Err(ProtocolError::BadTolerance);
        }
        let ok = match self.mode {
            Mode::OneDim => geom.dimension() == 1,
            Mode::ThreeDim => geom.dimension() >= 2,
        };
        if !ok {
            return Err(ProtocolError::ModeMismatch {
                mode: self.mode,
                dimension: geom.dimension(),
            });
        }
        Ok(())
    }

    /// Total authentication window, `N * tau`.
    pub fn delta_t(&self) -> ExactTime {
        self.round_period * self.rounds
    }

    /// How long a lone challenge waits for its partner.
    pub fn pair_wait(&self) -> ExactTime {
        self.round_period.halve()
    }

    fn max_tag_delay(&self, geom: &Geometry) -> ExactTime {
        geom.stations()
            .iter()
            .map(|s| geom.delay(s, &geom.tag()))
            .max()
            .unwrap_or(ExactTime::ZERO)
    }

    pub fn first_arrival_time(&self, geom: &Geometry) -> ExactTime {
        self.first_arrival
            .unwrap_or_else(|| self.max_tag_delay(geom) + ExactTime::from_int_units(1))
    }

    /// Target arrival time T_i of round `i` at the claimed tag position.
    pub fn arrival_time(&self, geom: &Geometry, round: u64) -> ExactTime {
        self.first_arrival_time(geom) + self.round_period * round
    }

    /// Expected arrival of round `i`'s response at station `s`.
    pub fn expected_response(&self, geom: &Geometry, round: u64, station: usize) -> ExactTime {
        self.arrival_time(geom, round) + geom.delay(&geom.tag(), &geom.station(station))
    }

    /// Stations keep listening this long past the latest expected response;
    /// anything later counts as missing.
    pub fn listen_window(&self, geom: &Geometry) -> ExactTime {
        geom.station_diameter() * 2
    }

    /// When the verifier closes round `i`.
    pub fn verify_deadline(&self, geom: &Geometry, round: u64) -> ExactTime {
        self.arrival_time(geom, round) + self.max_tag_delay(geom) + self.timing_tolerance + self.listen_window(geom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_first_arrival_and_window() {
        let g = Geometry::line(0.0, 10.0, 2.0).unwrap();
        let mut cfg = ProtocolConfig::new(4, Mode::OneDim);
        assert_eq!(cfg.first_arrival_time(&g), ExactTime::from_int_units(9));
        assert_eq!(cfg.delta_t(), ExactTime::from_int_units(4));
        cfg.round_period = ExactTime::from_int_units(3);
        assert_eq!(cfg.arrival_time(&g, 2), ExactTime::from_int_units(15));
        assert_eq!(cfg.listen_window(&g), ExactTime::from_int_units(20));
        assert_eq!(cfg.validate(&g), Ok(()));
    }

    #[test]
    fn rejects_bad_values() {
        let g = Geometry::line(0.0, 10.0, 2.0).unwrap();
        let mut cfg = ProtocolConfig::new(4, Mode::ThreeDim);
        assert!(matches!(cfg.validate(&g), Err(ProtocolError::ModeMismatch { .. })));
        cfg.mode = Mode::OneDim;
        cfg.round_period = ExactTime::ZERO;
        assert_eq!(cfg.validate(&g), Err(ProtocolError::BadPeriod));
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spacetime::Position;
use crate::time::ExactTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SecurityScenario {
    /// Tag immobile; Eve may switch it off and signal through it.
    #[serde(rename = "I")]
    Immobile,
    /// Eve may move the tag at speed up to `v`.
    #[serde(rename = "II")]
    Movable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryCapabilities {
    pub scenario: SecurityScenario,
    /// Tag speed bound `v`, scenario II only, `0 < v <= c`.
    pub speed_bound: Option<f64>,
    pub can_drop_messages: bool,
}

impl Default for AdversaryCapabilities {
    fn default() -> Self {
        AdversaryCapabilities {
            scenario: SecurityScenario::Immobile,
            speed_bound: None,
            can_drop_messages: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapabilityViolation {
    #[error("scenario I: the tag is immobile and cannot be relocated")]
    ImmobileTag,
    #[error("relocation by {distance} in {elapsed} time-units exceeds speed bound {bound}")]
    SpeedExceeded { distance: f64, elapsed: f64, bound: f64 },
    #[error("message dropping is not among the adversary's capabilities")]
    DropNotAllowed,
    #[error("invalid capabilities: {0}")]
    Invalid(String),
}

impl AdversaryCapabilities {
    pub fn movable(speed_bound: f64) -> Self {
        AdversaryCapabilities {
            scenario: SecurityScenario::Movable,
            speed_bound: Some(speed_bound),
            can_drop_messages: false,
        }
    }

    pub fn validate(&self, c: f64) -> Result<(), CapabilityViolation> {
        match (self.scenario, self.speed_bound) {
            (SecurityScenario::Movable, Some(v)) if v > 0.0 && v <= c => Ok(()),
            (SecurityScenario::Movable, _) => Err(CapabilityViolation::Invalid(format!(
                "scenario II needs 0 < v <= c = {c}"
            ))),
            (SecurityScenario::Immobile, _) => Ok(()),
        }
    }

    /// Checks a tag move from `from` (at rest since `since`) to `to` at `at`.
    pub fn check_move(
        &self,
        from: &Position,
        to: &Position,
        since: ExactTime,
        at: ExactTime,
    ) -> Result<(), CapabilityViolation> {
        let bound = match (self.scenario, self.speed_bound) {
            (SecurityScenario::Immobile, _) => return Err(CapabilityViolation::ImmobileTag),
            (SecurityScenario::Movable, v) => v.unwrap_or(0.0),
        };
        let distance = from.distance(to);
        let elapsed = (at - since).as_units();
        if distance > bound * elapsed {
            return Err(CapabilityViolation::SpeedExceeded {
                distance,
                elapsed,
                bound,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn immobile_tag_cannot_move() {
        let caps = AdversaryCapabilities::default();
        assert_eq!(
            caps.check_move(
                &Position::x(5.0),
                &Position::x(5.0),
                ExactTime::ZERO,
                ExactTime::from_int_units(9)
            ),
            Err(CapabilityViolation::ImmobileTag)
        );
    }

    #[test]
    fn speed_bound_enforced() {
        let caps = AdversaryCapabilities::movable(0.1);
        let (a, b) = (Position::x(5.0), Position::x(7.0));
        assert!(caps
            .check_move(&a, &b, ExactTime::ZERO, ExactTime::from_int_units(20))
            .is_ok());
        assert!(matches!(
            caps.check_move(&a, &b, ExactTime::ZERO, ExactTime::from_int_units(19)),
            Err(CapabilityViolation::SpeedExceeded { .. })
        ));
        assert!(AdversaryCapabilities::movable(2.0).validate(1.0).is_err());
    }
}

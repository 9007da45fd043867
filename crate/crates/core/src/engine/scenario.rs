use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryCapabilities, StrategySpec};
use crate::keys::{BitString, QkeParams};
use crate::protocol::{MacSlots, Mode, ProtocolConfig};
use crate::spacetime::Geometry;
use crate::time::ExactTime;

/// A validation failure with the dotted path of the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        FieldError {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Key material and key-expansion settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyConfig {
    /// Preshared tagging key. Used directly when long enough for the whole
    /// session, otherwise it authenticates the key expansion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_key: Option<BitString>,
    /// Authentication key for key expansion; 1024 fresh random bits when
    /// neither this nor `initial_key` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_key: Option<BitString>,
    /// Upper bound on qubits per expansion.
    #[serde(default = "default_n_raw")]
    pub n_raw: usize,
    #[serde(default = "default_threshold")]
    pub qber_threshold: f64,
    #[serde(default = "default_f_est")]
    pub f_est: f64,
    /// Fraction of qubits an intercept-resend eavesdropper measures.
    #[serde(default)]
    pub eavesdrop_fraction: f64,
}

fn default_n_raw() -> usize {
    4096
}

fn default_threshold() -> f64 {
    QkeParams::default().qber_threshold
}

fn default_f_est() -> f64 {
    QkeParams::default().f_est
}

impl Default for KeyConfig {
    fn default() -> Self {
        KeyConfig {
            initial_key: None,
            auth_key: None,
            n_raw: default_n_raw(),
            qber_threshold: default_threshold(),
            f_est: default_f_est(),
            eavesdrop_fraction: 0.0,
        }
    }
}

impl KeyConfig {
    pub fn qke_params(&self) -> QkeParams {
        QkeParams {
            qber_threshold: self.qber_threshold,
            f_est: self.f_est,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub capabilities: AdversaryCapabilities,
    pub strategy: StrategySpec,
}

/// Everything one simulated session needs besides the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: Geometry,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub keys: KeyConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
}

impl Scenario {
    /// Honest session with the default key settings.
    pub fn honest(geometry: Geometry, protocol: ProtocolConfig) -> Self {
        Scenario {
            geometry,
            protocol,
            keys: KeyConfig::default(),
            adversary: AdversaryConfig::default(),
        }
    }

    pub fn with_strategy(mut self, strategy: StrategySpec, capabilities: AdversaryCapabilities) -> Self {
        self.adversary = AdversaryConfig { capabilities, strategy };
        self
    }

    /// Key bits the tag's store needs for the whole session.
    pub fn tag_bits(&self) -> usize {
        let n = self.protocol.rounds as usize;
        match self.protocol.mode {
            Mode::OneDim => 4 * n,
            Mode::ThreeDim => 2 * self.geometry.stations().len() * n,
        }
    }

    /// Key bits reserved for message MACs.
    pub fn mac_bits(&self) -> usize {
        if self.protocol.authenticate_messages {
            MacSlots {
                stations: self.geometry.stations().len(),
            }
            .bits_needed(self.protocol.rounds)
        } else {
            0
        }
    }

    /// Checks every cross-field rule and reports all failures.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        let g = &self.geometry;
        if let Err(e) = Geometry::new(g.dimension(), g.c(), g.stations().to_vec(), g.tag(), g.tag_extent()) {
            errs.push(FieldError::new("geometry", e));
        }
        let p = &self.protocol;
        if p.rounds < 1 {
            errs.push(FieldError::new("protocol.rounds", "must be at least 1"));
        }
        if let Err(e) = p.validate(g) {
            errs.push(FieldError::new("protocol", e));
        }
        if errs.is_empty() {
            let latest = g
                .stations()
                .iter()
                .map(|s| g.delay(s, &g.tag()))
                .max()
                .unwrap_or(ExactTime::ZERO);
            if p.first_arrival_time(g) < latest {
                errs.push(FieldError::new(
                    "protocol.first_arrival",
                    format!("must be at least the largest station-to-tag delay {latest} so no send precedes t = 0"),
                ));
            }
        }
        let k = &self.keys;
        if k.n_raw == 0 {
            errs.push(FieldError::new("keys.n_raw", "must be positive"));
        }
        if !(k.f_est > 0.0 && k.f_est < 1.0) {
            errs.push(FieldError::new("keys.f_est", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&k.qber_threshold) {
            errs.push(FieldError::new("keys.qber_threshold", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&k.eavesdrop_fraction) {
            errs.push(FieldError::new("keys.eavesdrop_fraction", "must lie in [0, 1]"));
        }
        if let Err(e) = self.adversary.capabilities.validate(g.c()) {
            errs.push(FieldError::new("adversary.speed_bound", e));
        }
        for (name, pos) in self.adversary.strategy.positions() {
            if pos.dim() != g.dimension() {
                errs.push(FieldError::new(
                    format!("adversary.{name}"),
                    format!("has {} components, geometry has dimension {}", pos.dim(), g.dimension()),
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

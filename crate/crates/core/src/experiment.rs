//! Scenario files, parameter sweeps and experiment reports.
//!
//! A scenario file is TOML with `schema = 1`. Times are real numbers of
//! time-units and are converted to the tick grid on load. Sweeps are
//! Cartesian products over explicitly listed values.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{exact_spoof_probability, AdversaryCapabilities, RelayMode, SecurityScenario, StrategySpec};
use crate::engine::{run_trials, trial_seed, AdversaryConfig, FieldError, KeyConfig, Scenario, SimError};
use crate::protocol::{Mode, ProtocolConfig};
use crate::spacetime::{Geometry, Position};
use crate::time::ExactTime;

pub const CONFIG_SCHEMA: u32 = 1;
pub const REPORT_SCHEMA: u32 = 1;

/// z for a two-sided 95% interval.
const Z95: f64 = 1.959963984540054;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// Inferred from the tag position when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default = "one")]
    pub c: f64,
    pub stations: Vec<Position>,
    pub tag: Position,
    /// `[t_0, t_1]`, 1D only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_extent: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub rounds: u64,
    #[serde(default = "one")]
    pub round_period: f64,
    #[serde(default)]
    pub timing_tolerance: f64,
    /// `"1d"` or `"3d"`; follows the dimension when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub authenticate_messages: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_arrival: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    Passive,
    GuessSpoofer,
    Relocation,
    Displace,
    OffTagPrecompute,
    FtlProbe,
    OutsideResponder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    #[serde(default = "immobile")]
    pub scenario: SecurityScenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_bound: Option<f64>,
    #[serde(default)]
    pub can_drop_messages: bool,
    #[serde(default)]
    pub strategy: StrategyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit_point: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay: Option<RelayMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Position>,
}

fn immobile() -> SecurityScenario {
    SecurityScenario::Immobile
}

impl Default for AdversarySection {
    fn default() -> Self {
        AdversarySection {
            scenario: SecurityScenario::Immobile,
            speed_bound: None,
            can_drop_messages: false,
            strategy: StrategyName::Passive,
            emit_point: None,
            displacement: None,
            relay: None,
            probes: None,
            point: None,
        }
    }
}

/// Values to sweep over. Every listed axis multiplies the number of rows;
/// an empty list yields no rows at all.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_tolerance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Vec<Position>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eavesdrop_fraction: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_trials() -> u64 {
    1000
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            trials: default_trials(),
            seed: 0,
            workers: 0,
            sweep: Sweep::default(),
        }
    }
}

/// A scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub geometry: GeometrySection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub keys: KeyConfig,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<FieldError>),
}

fn list(errs: &[FieldError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

/// One row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rounds: u64,
    pub timing_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Position>,
    pub eavesdrop_fraction: f64,
}

impl ScenarioConfig {
    /// Fills every inferable default so that emitting and reloading is exact.
    pub fn expand_defaults(&mut self) {
        let dim = self.geometry.dimension.unwrap_or(self.geometry.tag.dim());
        self.geometry.dimension = Some(dim);
        if self.protocol.mode.is_none() {
            self.protocol.mode = Some(if dim == 1 { Mode::OneDim } else { Mode::ThreeDim });
        }
    }

    fn geometry(&self) -> Result<Geometry, FieldError> {
        let g = &self.geometry;
        Geometry::new(
            g.dimension.unwrap_or(g.tag.dim()),
            g.c,
            g.stations.clone(),
            g.tag,
            g.tag_extent.map(|[a, b]| (a, b)),
        )
        .map_err(|e| FieldError::new("geometry", e))
    }

    fn strategy(&self) -> Result<StrategySpec, Vec<FieldError>> {
        let a = &self.adversary;
        let need = |field: &str, v: Option<Position>| {
            v.ok_or_else(|| {
                FieldError::new(
                    format!("adversary.{field}"),
                    format!("required by strategy {:?}", a.strategy),
                )
            })
        };
        let spec = match a.strategy {
            StrategyName::Passive => StrategySpec::Passive,
            StrategyName::GuessSpoofer => StrategySpec::GuessSpoofer {
                emit_point: a.emit_point,
            },
            StrategyName::Relocation => {
                let displacement = need("displacement", a.displacement).map_err(|e| vec![e])?;
                StrategySpec::Relocation {
                    displacement,
                    mode: a.relay.unwrap_or(RelayMode::PureRelay),
                }
            }
            StrategyName::Displace => StrategySpec::Displace {
                displacement: need("displacement", a.displacement).map_err(|e| vec![e])?,
            },
            StrategyName::OffTagPrecompute => StrategySpec::OffTagPrecompute {
                probes: a.probes.unwrap_or(1),
            },
            StrategyName::FtlProbe => StrategySpec::FtlProbe,
            StrategyName::OutsideResponder => StrategySpec::OutsideResponder {
                point: need("point", a.point).map_err(|e| vec![e])?,
            },
        };
        Ok(spec)
    }

    /// The scenario at the base values, ignoring the sweep.
    pub fn base_scenario(&self) -> Result<Scenario, Vec<FieldError>> {
        let mut errs = Vec::new();
        let geometry = self.geometry().map_err(|e| errs.push(e)).ok();
        let p = &self.protocol;
        let mode = p.mode.unwrap_or(if self.geometry.tag.dim() == 1 {
            Mode::OneDim
        } else {
            Mode::ThreeDim
        });
        let mut protocol = ProtocolConfig::new(p.rounds, mode);
        for (name, v) in [
            ("round_period", p.round_period),
            ("timing_tolerance", p.timing_tolerance),
        ]
        .into_iter()
        .chain(p.first_arrival.map(|v| ("first_arrival", v)))
        {
            if !v.is_finite() {
                errs.push(FieldError::new(format!("protocol.{name}"), "must be finite"));
            }
        }
        protocol.round_period = ExactTime::from_units(p.round_period);
        protocol.timing_tolerance = ExactTime::from_units(p.timing_tolerance);
        protocol.authenticate_messages = p.authenticate_messages;
        protocol.first_arrival = p.first_arrival.map(ExactTime::from_units);
        let strategy = self.strategy().map_err(|e| errs.extend(e)).ok();
        let a = &self.adversary;
        let capabilities = AdversaryCapabilities {
            scenario: a.scenario,
            speed_bound: a.speed_bound,
            can_drop_messages: a.can_drop_messages,
        };
        if a.scenario == SecurityScenario::Immobile && a.speed_bound.is_some() {
            errs.push(FieldError::new(
                "adversary.speed_bound",
                "only meaningful in scenario II",
            ));
        }
        if let (Some(geometry), Some(strategy), true) = (geometry, strategy, errs.is_empty()) {
            let sc = Scenario {
                geometry,
                protocol,
                keys: self.keys.clone(),
                adversary: AdversaryConfig { capabilities, strategy },
            };
            sc.validate()?;
            Ok(sc)
        } else {
            Err(errs)
        }
    }

    /// Sweep rows in Cartesian order, `rounds` varying slowest.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let s = &self.experiment.sweep;
        let rounds = s.rounds.clone().unwrap_or_else(|| vec![self.protocol.rounds]);
        let tols = s
            .timing_tolerance
            .clone()
            .unwrap_or_else(|| vec![self.protocol.timing_tolerance]);
        let disps: Vec<Option<Position>> = match &s.displacement {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![self.adversary.displacement],
        };
        let eves = s
            .eavesdrop_fraction
            .clone()
            .unwrap_or_else(|| vec![self.keys.eavesdrop_fraction]);
        let mut out = Vec::new();
        for &r in &rounds {
            for &t in &tols {
                for &d in &disps {
                    for &e in &eves {
                        out.push(SweepPoint {
                            rounds: r,
                            timing_tolerance: t,
                            displacement: d,
                            eavesdrop_fraction: e,
                        });
                    }
                }
            }
        }
        out
    }

    /// The concrete scenario of one sweep row.
    pub fn scenario_at(&self, point: &SweepPoint) -> Result<Scenario, Vec<FieldError>> {
        let mut cfg = self.clone();
        cfg.protocol.rounds = point.rounds;
        cfg.protocol.timing_tolerance = point.timing_tolerance;
        cfg.adversary.displacement = point.displacement;
        cfg.keys.eavesdrop_fraction = point.eavesdrop_fraction;
        cfg.base_scenario()
    }

    /// Every rule of every row, all failures reported.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        if self.schema != CONFIG_SCHEMA {
            errs.push(FieldError::new(
                "schema",
                format!("unsupported schema {}, expected {CONFIG_SCHEMA}", self.schema),
            ));
        }
        if self.experiment.trials < 1 {
            errs.push(FieldError::new("experiment.trials", "must be at least 1"));
        }
        if let Err(e) = self.base_scenario() {
            errs.extend(e);
        }
        let sweep_errs: Vec<FieldError> = self
            .sweep_points()
            .iter()
            .enumerate()
            .filter_map(|(i, p)| self.scenario_at(p).err().map(|e| (i, e)))
            .flat_map(|(i, es)| {
                es.into_iter()
                    .map(move |e| FieldError::new(format!("experiment.sweep[row {i}].{}", e.path), e.message))
            })
            .collect();
        if errs.is_empty() {
            errs.extend(sweep_errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses, expands defaults and validates a scenario file's text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.expand_defaults();
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// One report record per configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub schema: u32,
    pub index: usize,
    pub strategy: String,
    #[serde(flatten)]
    pub point: SweepPoint,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub exact: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_abs_arrival_error: f64,
    pub max_abs_arrival_error: f64,
    pub qke_sessions: u64,
    pub qke_mean_sifted: f64,
    pub qke_qber: f64,
    pub qke_aborts: u64,
    pub delay_detections: u64,
    pub wrong_bit_detections: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Wall-clock time per row; shown in tables, never in records.
    pub durations: Vec<Duration>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Records,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Records => "records",
        })
    }
}

/// Runs every sweep row. Row `i` uses master seed `trial_seed(seed, i)`.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport, SimError> {
    cfg.validate().map_err(SimError::Invalid)?;
    let ex = &cfg.experiment;
    let mut report = ExperimentReport {
        rows: Vec::new(),
        durations: Vec::new(),
    };
    for (index, point) in cfg.sweep_points().into_iter().enumerate() {
        let sc = cfg.scenario_at(&point).map_err(SimError::Invalid)?;
        let started = Instant::now();
        let s = run_trials(&sc, ex.trials, trial_seed(ex.seed, index as u64), ex.workers)?;
        report.durations.push(started.elapsed());
        let (ci_low, ci_high) = wilson_interval(s.successes, s.trials, Z95);
        let sessions_ok = s.qke_sessions.saturating_sub(s.qke_aborts);
        report.rows.push(ReportRow {
            schema: REPORT_SCHEMA,
            index,
            strategy: sc.adversary.strategy.name().to_string(),
            point,
            trials: s.trials,
            successes: s.successes,
            p_hat: s.p_hat(),
            exact: exact_spoof_probability(&sc),
            ci_low,
            ci_high,
            mean_abs_arrival_error: s.mean_abs_error(),
            max_abs_arrival_error: s.max_abs_error.as_units(),
            qke_sessions: s.qke_sessions,
            qke_mean_sifted: if sessions_ok == 0 {
                0.0
            } else {
                s.qke_sifted as f64 / sessions_ok as f64
            },
            qke_qber: if s.qke_sample == 0 {
                0.0
            } else {
                s.qke_errors as f64 / s.qke_sample as f64
            },
            qke_aborts: s.qke_aborts,
            delay_detections: s.delay_detections,
            wrong_bit_detections: s.wrong_bit_detections,
        });
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.6}"))
}

pub fn emit_report<W: Write>(report: &ExperimentReport, format: ReportFormat, mut out: W) -> io::Result<()> {
    match format {
        ReportFormat::Records => {
            for r in &report.rows {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
        ReportFormat::Table => {
            writeln!(
                out,
                "{:>4} {:<18} {:>6} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8} {:>10}",
                "row",
                "strategy",
                "N",
                "tol",
                "trials",
                "successes",
                "p_hat",
                "exact",
                "ci_low",
                "ci_high",
                "max_err",
                "qber",
                "aborts",
                "ms"
            )?;
            for (r, d) in report.rows.iter().zip(&report.durations) {
                writeln!(
                    out,
                    "{:>4} {:<18} {:>6} {:>8} {:>10} {:>10} {:>10.6} {:>10} {:>10.6} {:>10.6} {:>10.4} {:>10.4} {:>8} {:>10.1}",
                    r.index,
                    r.strategy,
                    r.point.rounds,
                    r.point.timing_tolerance,
                    r.trials,
                    r.successes,
                    r.p_hat,
                    opt(r.exact),
                    r.ci_low,
                    r.ci_high,
                    r.max_abs_arrival_error,
                    r.qke_qber,
                    r.qke_aborts,
                    d.as_secs_f64() * 1e3
                )?;
            }
        }
    }
    Ok(())
}

/// Parses records output back into rows.
pub fn parse_records(text: &str) -> Result<Vec<ReportRow>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = 1
[geometry]
stations = [[0.0], [10.0]]
tag = [5.0]
[protocol]
rounds = 4
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.geometry.dimension, Some(1));
        assert_eq!(cfg.protocol.mode, Some(Mode::OneDim));
        assert_eq!(cfg.geometry.c, 1.0);
        assert_eq!(cfg.experiment.trials, 1000);
        assert_eq!(cfg.keys.n_raw, 4096);
        assert_eq!(cfg.sweep_points().len(), 1);
    }

    #[test]
    fn emitted_config_reloads_equal() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn reversed_stations_name_the_rule() {
        let text = MINIMAL.replace("[[0.0], [10.0]]", "[[10.0], [0.0]]");
        let Err(ConfigError::Invalid(errs)) = parse_config(&text) else {
            panic!("expected validation errors");
        };
        assert_eq!(errs[0].path, "geometry");
        assert!(errs[0].message.contains("a_0 < a_1"));
    }

    #[test]
    fn all_errors_are_reported() {
        let text = MINIMAL.replace("rounds = 4", "rounds = 0\ntiming_tolerance = -1.0") + "[experiment]\ntrials = 0\n";
        let Err(ConfigError::Invalid(errs)) = parse_config(&text) else {
            panic!("expected validation errors");
        };
        let paths: Vec<_> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"experiment.trials"));
        assert!(paths.contains(&"protocol.rounds"));
        assert!(paths.contains(&"protocol"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = MINIMAL.replace("rounds = 4", "rounds = = 4");
        match parse_config(&text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_sweep_has_no_rows() {
        let text = format!("{MINIMAL}[experiment.sweep]\nrounds = []\n");
        let cfg = parse_config(&text).unwrap();
        assert!(cfg.sweep_points().is_empty());
        let report = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        emit_report(&report, ReportFormat::Table, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn wilson_matches_reference() {
        // 0 of 10: upper bound z^2 / (n + z^2).
        let (lo, hi) = wilson_interval(0, 10, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - Z95 * Z95 / (10.0 + Z95 * Z95)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!((lo - 0.40383153).abs() < 1e-6 && (hi - 0.59616847).abs() < 1e-6);
    }
}

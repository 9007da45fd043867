//! Python bindings for the tagging simulator.
//!
//! Configs are passed as TOML text, results come back as plain dicts and
//! lists decoded from the same JSON the command line tool emits.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qtag_core::adversary::exact_spoof_probability;
use qtag_core::engine::{replay, run, SimError, Trace};
use qtag_core::experiment::{emit_report, parse_config, run_experiment, ConfigError, ReportFormat, ScenarioConfig};

create_exception!(
    qtag,
    ConfigurationError,
    PyException,
    "The scenario file is malformed or invalid."
);
create_exception!(qtag, SimulationError, PyException, "A run aborted.");
create_exception!(
    qtag,
    InvariantViolation,
    SimulationError,
    "An adversary or the engine broke a model rule."
);

fn config_err(e: ConfigError) -> PyErr {
    ConfigurationError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Invalid(_) => ConfigurationError::new_err(e.to_string()),
        e if e.is_invariant_violation() => InvariantViolation::new_err(e.to_string()),
        e => SimulationError::new_err(e.to_string()),
    }
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn config(text: &str, seed: Option<u64>, trials: Option<u64>, workers: Option<usize>) -> PyResult<ScenarioConfig> {
    let mut cfg = parse_config(text).map_err(config_err)?;
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    if let Some(t) = trials {
        cfg.experiment.trials = t;
    }
    if let Some(w) = workers {
        cfg.experiment.workers = w;
    }
    cfg.validate().map_err(|e| config_err(ConfigError::Invalid(e)))?;
    Ok(cfg)
}

/// Validation errors of a scenario file as "path: message" strings.
#[pyfunction]
fn validate(text: &str) -> Vec<String> {
    match parse_config(text) {
        Ok(_) => Vec::new(),
        Err(ConfigError::Invalid(errs)) => errs.iter().map(ToString::to_string).collect(),
        Err(e) => vec![e.to_string()],
    }
}

/// Runs every sweep row and returns one record dict per row.
#[pyfunction]
#[pyo3(signature = (text, seed=None, trials=None, workers=None))]
fn run_config<'py>(
    py: Python<'py>,
    text: &str,
    seed: Option<u64>,
    trials: Option<u64>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(text, seed, trials, workers)?;
    let report = py.detach(|| run_experiment(&cfg)).map_err(sim_err)?;
    let mut buf = Vec::new();
    emit_report(&report, ReportFormat::Records, &mut buf).map_err(|e| SimulationError::new_err(e.to_string()))?;
    let rows = String::from_utf8_lossy(&buf)
        .lines()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(",");
    from_json(py, &format!("[{rows}]"))
}

/// One session of the first sweep row: decision dict plus the NDJSON trace.
#[pyfunction]
fn run_session<'py>(py: Python<'py>, text: &str, seed: u64) -> PyResult<(Bound<'py, PyAny>, String)> {
    let cfg = config(text, None, None, None)?;
    let point = cfg
        .sweep_points()
        .into_iter()
        .next()
        .ok_or_else(|| ConfigurationError::new_err("the sweep has no rows"))?;
    let sc = cfg
        .scenario_at(&point)
        .map_err(|e| config_err(ConfigError::Invalid(e)))?;
    let out = py.detach(|| run(&sc, seed)).map_err(sim_err)?;
    let decision = serde_json::to_string(&out.decision).map_err(|e| SimulationError::new_err(e.to_string()))?;
    let trace = out.trace.map(|t| t.to_ndjson()).unwrap_or_default();
    Ok((from_json(py, &decision)?, trace))
}

/// Re-runs an NDJSON trace; true when it matches and audits clean.
#[pyfunction]
fn replay_trace(text: &str) -> PyResult<bool> {
    let trace = Trace::read_ndjson(text.as_bytes()).map_err(|e| SimulationError::new_err(e.to_string()))?;
    Ok(replay(&trace).map_err(sim_err)?.is_ok())
}

/// Analytic spoofing probability of the first sweep row, if known.
#[pyfunction]
fn exact_probability(text: &str) -> PyResult<Option<f64>> {
    let cfg = config(text, None, None, None)?;
    let Some(point) = cfg.sweep_points().into_iter().next() else {
        return Ok(None);
    };
    let sc = cfg
        .scenario_at(&point)
        .map_err(|e| config_err(ConfigError::Invalid(e)))?;
    Ok(exact_spoof_probability(&sc))
}

#[pymodule]
fn qtag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConfigurationError", m.py().get_type::<ConfigurationError>())?;
    m.add("SimulationError", m.py().get_type::<SimulationError>())?;
    m.add("InvariantViolation", m.py().get_type::<InvariantViolation>())?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(replay_trace, m)?)?;
    m.add_function(wrap_pyfunction!(exact_probability, m)?)?;
    Ok(())
}

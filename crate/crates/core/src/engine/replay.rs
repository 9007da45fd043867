use serde::{Deserialize, Serialize};

use super::{run, SimError, Trace, TraceKind};
use crate::adversary::{validate_injection, InfoLedger};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// Position of the first differing record (the header is not counted).
    pub index: usize,
    pub expected: Option<String>,
    pub found: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub index: usize,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub records: usize,
    pub divergence: Option<Divergence>,
    pub violations: Vec<AuditViolation>,
}

impl ReplayReport {
    pub fn is_ok(&self) -> bool {
        self.divergence.is_none() && self.violations.is_empty()
    }
}

/// Re-executes the trace's scenario and seed, compares record by record,
/// and re-audits the trace as given.
pub fn replay(trace: &Trace) -> Result<ReplayReport, SimError> {
    let fresh = run(&trace.header.scenario, trace.header.seed)?
        .trace
        .expect("run always traces");
    let a: Vec<serde_json::Value> = trace.records.iter().map(to_value).collect();
    let b: Vec<serde_json::Value> = fresh.records.iter().map(to_value).collect();
    let divergence = (0..a.len().max(b.len()))
        .find(|&i| a.get(i) != b.get(i))
        .map(|index| Divergence {
            index,
            expected: b.get(index).map(ToString::to_string),
            found: a.get(index).map(ToString::to_string),
        });
    Ok(ReplayReport {
        records: trace.records.len(),
        divergence,
        violations: audit(trace)?,
    })
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("trace records serialize")
}

/// Rebuilds the information ledger from the trace alone and checks every
/// injection against it, and every delivery against light speed.
pub fn audit(trace: &Trace) -> Result<Vec<AuditViolation>, SimError> {
    let sc = &trace.header.scenario;
    sc.validate().map_err(SimError::Invalid)?;
    let geom = &sc.geometry;
    let mut ledger = InfoLedger::new();
    let mut out = Vec::new();
    for (index, r) in trace.records.iter().enumerate() {
        match &r.kind {
            TraceKind::Send { message } | TraceKind::Emit { message } => {
                for d in &r.data {
                    ledger.record(*d, message.event());
                }
            }
            TraceKind::Inject { emit, refs, .. } => {
                if let Err(e) = validate_injection(refs, emit, &ledger, geom) {
                    out.push(AuditViolation {
                        index,
                        detail: e.to_string(),
                    });
                }
            }
            TraceKind::Deliver { message, at, .. } => {
                let from = message.event();
                let earliest = from.t + geom.delay(&from.x, &at.x);
                if at.t < earliest {
                    out.push(AuditViolation {
                        index,
                        detail: format!("delivered at {} before light-speed arrival {}", at.t, earliest),
                    });
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

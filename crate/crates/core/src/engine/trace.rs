use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Scenario;
use crate::adversary::{DatumId, Target};
use crate::keys::AbortCause;
use crate::protocol::{AuthDecision, BurnReason, DistanceBound, Message, RoundVerdict};
use crate::spacetime::{Position, SpacetimeEvent};
use crate::time::ExactTime;

pub const TRACE_FORMAT: &str = "qtag-trace";
pub const TRACE_VERSION: u32 = 1;

/// Who handled an event. The derived order breaks ties between events
/// scheduled for the same instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorId {
    Station(u8),
    Tag,
    Adversary,
    Verifier,
    Engine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Jammed,
    /// The tag had moved away before the signal arrived.
    Missed,
    /// The tag is sealed inside Eve's region.
    Enclosed,
}

/// Serializable summary of a tag reaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reaction", rename_all = "snake_case")]
pub enum TagOutcome {
    Respond { round: u64, key_index: u64, bit: bool },
    Answer { station: u8, block: u64, bit: bool },
    Waiting { round: u64, wake_at: ExactTime },
    Burned { round: u64, reason: BurnReason },
    Depleted { round: u64 },
    MacRejected,
    PassThrough,
    Nothing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceKind {
    Qke {
        session: u32,
        raw_length: usize,
        sifted_length: usize,
        sample_length: usize,
        sample_errors: usize,
        auth_bits_used: usize,
    },
    QkeAbort {
        cause: AbortCause,
    },
    KeysReady {
        tag_bits: usize,
        mac_bits: usize,
        /// Positions where the station's and the tag's copies differ.
        mismatched_bits: usize,
    },
    /// A station emitted a challenge or request.
    Send {
        message: Message,
    },
    Deliver {
        message: Message,
        to: Target,
        at: SpacetimeEvent,
    },
    Dropped {
        message: Message,
        to: Target,
        reason: DropReason,
    },
    Tag {
        outcome: TagOutcome,
    },
    /// The tag emitted a response.
    Emit {
        message: Message,
    },
    PairTimeout {
        round: u64,
    },
    Inject {
        emit: SpacetimeEvent,
        target: Target,
        refs: Vec<DatumId>,
        message: Message,
    },
    Relocate {
        to: Position,
        enclose: bool,
    },
    Jam {
        target: Target,
        until: ExactTime,
    },
    Verdict {
        verdict: RoundVerdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Vec<Option<DistanceBound>>>,
    },
    Decision {
        decision: AuthDecision,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: u64,
    pub t: ExactTime,
    pub actor: ActorId,
    #[serde(flatten)]
    pub kind: TraceKind,
    /// Data this record makes observable.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<DatumId>,
    pub rng_draws: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("empty trace")]
    Empty,
    #[error("not a trace: format {0:?}")]
    Format(String),
    #[error("unsupported trace version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
}

impl Trace {
    pub fn new(seed: u64, scenario: Scenario, records: Vec<TraceRecord>) -> Self {
        Trace {
            header: TraceHeader {
                format: TRACE_FORMAT.to_string(),
                version: TRACE_VERSION,
                seed,
                scenario,
            },
            records,
        }
    }

    /// Header line followed by one JSON record per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Trace, TraceError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let first = first?;
        let raw: serde_json::Value =
            serde_json::from_str(&first).map_err(|source| TraceError::Parse { line: 1, source })?;
        let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        if format != TRACE_FORMAT {
            return Err(TraceError::Format(format.to_string()));
        }
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != TRACE_VERSION {
            return Err(TraceError::Version {
                found: version,
                expected: TRACE_VERSION,
            });
        }
        let header: TraceHeader =
            serde_json::from_value(raw).map_err(|source| TraceError::Parse { line: 1, source })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let r = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
            records.push(r);
        }
        Ok(Trace { header, records })
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::memory::ActionKind;
use crate::monitor::Metric;

/// Written into every trace header; replay refuses other versions.
pub const ENGINE_VERSION: &str = "tcrag-engine/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: String,
    pub query: String,
    pub metric: Metric,
    pub sigma: f64,
    pub large_value: f64,
    pub max_loop: usize,
    pub state_gating: bool,
    pub allowed: Vec<ActionKind>,
}

/// One generator call and its effect on state and memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based count of actions taken, including faulty ones.
    pub step: usize,
    /// Kind the generator emitted; `None` when the output did not parse.
    pub emitted: Option<ActionKind>,
    /// Kind actually applied (`Thought` for a reclassified `Conclusion`).
    pub applied: Option<ActionKind>,
    pub content: String,
    pub content_hash: String,
    pub tool: Option<String>,
    pub tool_error: bool,
    /// Raw cppl/uct value computed for `Thought`/`Conclusion`.
    pub computed_value: Option<f64>,
    pub state_before: f64,
    pub state_after: f64,
    pub depth_after: usize,
    pub top_sequence_no: u64,
    pub popped: Option<ActionKind>,
    pub restoration: Option<f64>,
    pub reclassified: bool,
    pub accepted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Concluded,
    BudgetExhausted,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub status: SessionStatus,
    /// Accepted conclusion, or the top of the stack as a best effort.
    pub conclusion: String,
    pub actions_taken: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub outcome: SessionOutcome,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Step(TraceRecord),
    Outcome(SessionOutcome),
}

impl SessionTrace {
    /// Header line, one line per record, outcome line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = TraceLine::Header(self.header.clone());
        writeln!(out, "{}", serde_json::to_string(&header).expect("trace serializes")).unwrap();
        for r in &self.records {
            let line = TraceLine::Step(r.clone());
            writeln!(out, "{}", serde_json::to_string(&line).expect("trace serializes")).unwrap();
        }
        let outcome = TraceLine::Outcome(self.outcome.clone());
        writeln!(out, "{}", serde_json::to_string(&outcome).expect("trace serializes")).unwrap();
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, EngineError> {
        let mut header = None;
        let mut records = Vec::new();
        let mut outcome = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: TraceLine =
                serde_json::from_str(line).map_err(|e| EngineError::Trace(format!("line {}: {e}", i + 1)))?;
            match parsed {
                TraceLine::Header(h) if header.is_none() => header = Some(h),
                TraceLine::Step(r) if header.is_some() && outcome.is_none() => records.push(r),
                TraceLine::Outcome(o) if header.is_some() && outcome.is_none() => outcome = Some(o),
                _ => return Err(EngineError::Trace(format!("line {}: out of order", i + 1))),
            }
        }
        Ok(Self {
            header: header.ok_or_else(|| EngineError::Trace("missing header".into()))?,
            records,
            outcome: outcome.ok_or_else(|| EngineError::Trace("missing outcome".into()))?,
        })
    }

    pub fn count_emitted(&self, kind: ActionKind) -> usize {
        self.records.iter().filter(|r| r.emitted == Some(kind)).count()
    }

    /// Whether an action of `kind` was applied at least once.
    pub fn applied_at_least_once(&self, kind: ActionKind) -> bool {
        self.records.iter().any(|r| r.applied == Some(kind))
    }
}

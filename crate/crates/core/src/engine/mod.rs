//! The reasoning loop.
//!
//! Each iteration renders the memory stack, asks the generator for one
//! action, and applies it:
//!
//! * `Conclusion`: score it; below `sigma` it is pushed and the loop ends,
//!   otherwise it is pushed as a `Thought` and the score becomes the state.
//! * `Thought`: score it, lift the score to at least `sigma`, push.
//! * `Tool_Use`: call the tool with the user query and push the observation.
//! * `Backtrack`: pop; popping a `Thought` restores the state saved with it.
//! * `Summary`: pop the top frame and push the summary in its place.
//!
//! Unparseable or disallowed output counts against `max_loop` and the
//! generator is asked again with the unchanged stack.

mod generator;
mod parse;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generator::{
    ActionGenerator, Generation, GenerationRequest, GeneratorError, PlaybookEntry, ScriptedGenerator, WireGenerator,
};
pub use parse::{parse_action, ParseError, ParsedAction, EMITTABLE};
pub use trace::{SessionOutcome, SessionStatus, SessionTrace, TraceHeader, TraceRecord, ENGINE_VERSION};

use crate::memory::{content_hash, ActionKind, ComposedAction, MemoryError, MemoryStack};
use crate::monitor::{clamp_thought_state, evaluate_state, is_final, MonitorConfig, MonitorError, StateValue};
use crate::retrieval::ToolInvoker;

pub const DEFAULT_MAX_LOOP: usize = 12;
pub const DEFAULT_MAX_TOKENS: u32 = 500;
pub const DEFAULT_TEMPERATURE: f64 = 0.6;

pub const DEFAULT_PROMPT_TEMPLATE: &str = "\
Answer the question as well as you can. These tools are available:

{tool_descriptions}

Work step by step. Each reply must be exactly one action written as `Label: content`.
Lines labelled User_Query and Tool_Observation are supplied by the system, never by you.

{action_formats}

Begin!";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("trace was written by {found}, this engine is {expected}")]
    VersionMismatch { found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub max_loop: usize,
    pub monitor: MonitorConfig,
    pub prompt_template: String,
    /// Actions the generator may use; anything else is treated as a fault.
    pub allowed: Vec<ActionKind>,
    /// When false, any `Conclusion` is accepted without checking `sigma`.
    pub state_gating: bool,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_loop: DEFAULT_MAX_LOOP,
            monitor: MonitorConfig::default(),
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            allowed: EMITTABLE.to_vec(),
            state_gating: true,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl EngineConfig {
    pub fn with_monitor(monitor: MonitorConfig) -> Self {
        Self { monitor, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_loop == 0 {
            return Err(EngineError::Config("max_loop must be at least 1".into()));
        }
        self.monitor.validate()?;
        if let Some(k) = self.allowed.iter().find(|k| !EMITTABLE.contains(k)) {
            return Err(EngineError::Config(format!("{k} cannot be emitted by a generator")));
        }
        Ok(())
    }

    fn action_format(kind: ActionKind, tool_names: &str) -> String {
        let what = match kind {
            ActionKind::Thought => "your reasoning about what to do next".to_string(),
            ActionKind::ToolUse => format!("the name of one tool from [{tool_names}] and nothing else"),
            ActionKind::Summary => {
                "a condensed restatement of the previous output when it is long or partly noisy".to_string()
            }
            ActionKind::Backtrack => "discard the previous output when it is useless for the question".to_string(),
            ActionKind::Conclusion => "the final answer to the question".to_string(),
            ActionKind::UserQuery | ActionKind::ToolObservation => unreachable!("not emittable"),
        };
        format!("{}: {what}", kind.label())
    }

    pub fn render_prompt(&self, tools: &dyn ToolInvoker) -> String {
        let described = tools.describe();
        let descriptions = described.iter().map(|(n, d)| format!("{n}: {d}")).collect::<Vec<_>>().join("\n");
        let names = described.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", ");
        let formats = EMITTABLE
            .iter()
            .filter(|k| self.allowed.contains(k))
            .map(|k| Self::action_format(*k, &names))
            .collect::<Vec<_>>()
            .join("\n");
        self.prompt_template
            .replace("{tool_descriptions}", &descriptions)
            .replace("{tool_names}", &names)
            .replace("{action_formats}", &formats)
    }

    fn header(&self, query: &str) -> TraceHeader {
        TraceHeader {
            version: ENGINE_VERSION.to_string(),
            query: query.to_string(),
            metric: self.monitor.metric,
            sigma: self.monitor.sigma,
            large_value: self.monitor.large_value,
            max_loop: self.max_loop,
            state_gating: self.state_gating,
            allowed: self.allowed.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub conclusion: String,
    pub trace: SessionTrace,
    pub stack: MemoryStack,
}

struct Loop<'a> {
    cfg: &'a EngineConfig,
    query: &'a str,
    stack: MemoryStack,
    state: f64,
    accepted: bool,
}

impl Loop<'_> {
    fn score(&self, gen: &Generation, step: usize) -> Result<StateValue, MonitorError> {
        evaluate_state(&gen.tokens, &self.cfg.monitor, step as u64)
    }

    fn apply(
        &mut self,
        action: &ParsedAction,
        gen: &Generation,
        tools: &mut dyn ToolInvoker,
        rec: &mut TraceRecord,
    ) -> Result<(), String> {
        let sigma_cfg = &self.cfg.monitor;
        match action.kind {
            ActionKind::Conclusion => {
                let value = self.score(gen, rec.step);
                rec.computed_value = value.as_ref().ok().map(|v| v.value);
                let value = match value {
                    Ok(v) => Some(v),
                    Err(e) if self.cfg.state_gating => return Err(format!("state: {e}")),
                    Err(_) => None,
                };
                let accept = !self.cfg.state_gating
                    || value.as_ref().is_some_and(|v| is_final(v, ActionKind::Conclusion, sigma_cfg));
                let frame = if accept {
                    ComposedAction::Conclusion(action.content.clone())
                } else {
                    rec.reclassified = true;
                    ComposedAction::Thought(action.content.clone())
                };
                self.stack.apply(&frame, self.state).map_err(|e| e.to_string())?;
                rec.applied = Some(if accept { ActionKind::Conclusion } else { ActionKind::Thought });
                if let Some(v) = value {
                    self.state = v.value;
                }
                self.accepted = accept;
                rec.accepted = accept;
            }
            ActionKind::Thought => {
                let value = self.score(gen, rec.step).map_err(|e| format!("state: {e}"))?;
                rec.computed_value = Some(value.value);
                self.stack
                    .apply(&ComposedAction::Thought(action.content.clone()), self.state)
                    .map_err(|e| e.to_string())?;
                self.state = clamp_thought_state(&value, sigma_cfg).value;
                rec.applied = Some(ActionKind::Thought);
            }
            ActionKind::ToolUse => {
                let name = action.tool_name.clone().unwrap_or_default();
                let out = tools.invoke(&name, self.query);
                rec.tool = Some(name.clone());
                rec.tool_error = out.error;
                self.stack
                    .apply(&ComposedAction::ToolObservation { tool: name, content: out.text }, self.state)
                    .map_err(|e| e.to_string())?;
                rec.applied = Some(ActionKind::ToolObservation);
            }
            ActionKind::Backtrack => {
                let out = self.stack.apply(&ComposedAction::Backtrack, self.state).map_err(|e| e.to_string())?;
                rec.popped = out.popped.map(|f| f.kind);
                rec.restoration = out.restoration;
                if let Some(r) = out.restoration {
                    self.state = r;
                }
                rec.applied = Some(ActionKind::Backtrack);
            }
            ActionKind::Summary => {
                let out = self
                    .stack
                    .apply(&ComposedAction::Summary(action.content.clone()), self.state)
                    .map_err(|e| e.to_string())?;
                rec.popped = out.popped.map(|f| f.kind);
                rec.applied = Some(ActionKind::Summary);
            }
            ActionKind::UserQuery | ActionKind::ToolObservation => {
                unreachable!("parser never yields {}", action.kind)
            }
        }
        Ok(())
    }
}

/// Runs one session to a validated conclusion, the action budget, or a
/// generator failure. The returned conclusion is the top of the stack.
pub fn reasoning_loop(
    query: &str,
    generator: &mut dyn ActionGenerator,
    tools: &mut dyn ToolInvoker,
    cfg: &EngineConfig,
) -> Result<Session, EngineError> {
    cfg.validate()?;
    let sigma = cfg.monitor.sigma;
    let mut run = Loop {
        cfg,
        query,
        stack: MemoryStack::new(query, cfg.monitor.large_value)?,
        state: cfg.monitor.large_value,
        accepted: false,
    };
    let prompt = cfg.render_prompt(tools);
    let mut records = Vec::new();
    let mut taken = 0;
    let mut abort = None;

    while taken < cfg.max_loop && run.state >= sigma {
        let request = GenerationRequest {
            context: run.stack.render_context(),
            prompt: prompt.clone(),
            max_tokens: cfg.max_tokens,
            temperature: cfg.temperature,
        };
        let gen = match generator.generate(&request) {
            Ok(g) => g,
            Err(e) => {
                abort = Some(e.to_string());
                break;
            }
        };
        taken += 1;
        let mut rec = TraceRecord {
            step: taken,
            emitted: None,
            applied: None,
            content: String::new(),
            content_hash: String::new(),
            tool: None,
            tool_error: false,
            computed_value: None,
            state_before: run.state,
            state_after: run.state,
            depth_after: 0,
            top_sequence_no: 0,
            popped: None,
            restoration: None,
            reclassified: false,
            accepted: false,
            error: None,
        };
        match parse_action(&gen.text) {
            Err(e) => {
                rec.content = gen.text.clone();
                rec.error = Some(format!("parse: {e}"));
            }
            Ok(action) => {
                rec.emitted = Some(action.kind);
                rec.content = action.content.clone();
                if !cfg.allowed.contains(&action.kind) {
                    rec.error = Some(format!("{} is not an allowed action", action.kind));
                } else if let Err(e) = run.apply(&action, &gen, tools, &mut rec) {
                    rec.error = Some(e);
                }
            }
        }
        rec.content_hash = content_hash(&rec.content);
        rec.state_after = run.state;
        rec.depth_after = run.stack.depth();
        rec.top_sequence_no = run.stack.top().sequence_no;
        records.push(rec);
        if run.accepted {
            break;
        }
    }

    let conclusion = run.stack.top().content.clone();
    let status = match (&abort, run.accepted) {
        (Some(_), _) => SessionStatus::Aborted,
        (None, true) => SessionStatus::Concluded,
        (None, false) => SessionStatus::BudgetExhausted,
    };
    Ok(Session {
        conclusion: conclusion.clone(),
        trace: SessionTrace {
            header: cfg.header(query),
            records,
            outcome: SessionOutcome { status, conclusion, actions_taken: taken, error: abort },
        },
        stack: run.stack,
    })
}

/// Re-runs a stored trace with the same playbook and tools and reports
/// whether the serialized trace is byte-identical.
pub fn replay(
    trace: &SessionTrace,
    generator: &ScriptedGenerator,
    tools: &mut dyn ToolInvoker,
    cfg: &EngineConfig,
) -> Result<bool, EngineError> {
    if trace.header.version != ENGINE_VERSION {
        return Err(EngineError::VersionMismatch {
            found: trace.header.version.clone(),
            expected: ENGINE_VERSION.to_string(),
        });
    }
    let mut generator = generator.rewound();
    let again = reasoning_loop(&trace.header.query, &mut generator, tools, cfg)?;
    Ok(again.trace.to_jsonl() == trace.to_jsonl())
}

//! LIFO agent memory.
//!
//! The bottom frame is always the user query and can never be popped. Every
//! other frame records the state value that was in force just before it was
//! pushed, which is what a backtrack over a `Thought` restores.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Maximum stored frame content in bytes; longer text is truncated.
pub const MAX_FRAME_BYTES: usize = 16 * 1024;
pub const TRUNCATION_MARKER: &str = " …[truncated]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    #[serde(rename = "User_Query")]
    UserQuery,
    Thought,
    #[serde(rename = "Tool_Use")]
    ToolUse,
    #[serde(rename = "Tool_Observation")]
    ToolObservation,
    Backtrack,
    Summary,
    Conclusion,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::UserQuery,
        ActionKind::Thought,
        ActionKind::ToolUse,
        ActionKind::ToolObservation,
        ActionKind::Backtrack,
        ActionKind::Summary,
        ActionKind::Conclusion,
    ];

    /// Label used in prompts and rendered context.
    pub fn label(self) -> &'static str {
        match self {
            ActionKind::UserQuery => "User_Query",
            ActionKind::Thought => "Thought",
            ActionKind::ToolUse => "Tool_Use",
            ActionKind::ToolObservation => "Tool_Observation",
            ActionKind::Backtrack => "Backtrack",
            ActionKind::Summary => "Summary",
            ActionKind::Conclusion => "Conclusion",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == label)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("the user query cannot be empty")]
    EmptyQuery,
    #[error("the bottom user query frame cannot be popped")]
    BottomImmutable,
    #[error("a user query frame may only sit at the bottom")]
    DuplicateUserQuery,
    #[error("{0} is a stack command and cannot be stored as a frame")]
    CommandFrame(ActionKind),
    #[error("tool_name must be present exactly on tool observations")]
    ToolNameMismatch,
    #[error("saved state value must be positive, got {0}")]
    InvalidStateValue(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackFrame {
    pub kind: ActionKind,
    pub content: String,
    pub saved_state_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tool_name: Option<String>,
    pub sequence_no: u64,
}

impl StackFrame {
    /// A frame ready to push; the stack assigns `sequence_no`.
    pub fn new(kind: ActionKind, content: impl Into<String>, saved_state_value: f64) -> Self {
        Self { kind, content: cap_content(content.into()), saved_state_value, tool_name: None, sequence_no: 0 }
    }

    pub fn observation(tool_name: impl Into<String>, content: impl Into<String>, saved_state_value: f64) -> Self {
        Self { tool_name: Some(tool_name.into()), ..Self::new(ActionKind::ToolObservation, content, saved_state_value) }
    }

    fn validate(&self) -> Result<(), MemoryError> {
        if matches!(self.kind, ActionKind::Backtrack | ActionKind::Summary | ActionKind::ToolUse) {
            return Err(MemoryError::CommandFrame(self.kind));
        }
        if self.tool_name.is_some() != (self.kind == ActionKind::ToolObservation) {
            return Err(MemoryError::ToolNameMismatch);
        }
        if self.saved_state_value.is_nan() || self.saved_state_value <= 0.0 {
            return Err(MemoryError::InvalidStateValue(self.saved_state_value));
        }
        Ok(())
    }
}

fn cap_content(mut text: String) -> String {
    if text.len() <= MAX_FRAME_BYTES {
        return text;
    }
    let mut cut = MAX_FRAME_BYTES - TRUNCATION_MARKER.len();
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    text.truncate(cut);
    text.push_str(TRUNCATION_MARKER);
    text
}

/// Stack-level effect of an agent action.
#[derive(Debug, Clone, PartialEq)]
pub enum ComposedAction {
    Thought(String),
    ToolObservation { tool: String, content: String },
    Backtrack,
    Summary(String),
    Conclusion(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApplyOutcome {
    /// State value to restore, set only when a `Thought` was backtracked.
    pub restoration: Option<f64>,
    pub popped: Option<StackFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStack {
    frames: Vec<StackFrame>,
}

impl MemoryStack {
    pub fn new(user_query: &str, initial_state: f64) -> Result<Self, MemoryError> {
        if user_query.trim().is_empty() {
            return Err(MemoryError::EmptyQuery);
        }
        let bottom = StackFrame::new(ActionKind::UserQuery, user_query, initial_state);
        bottom.validate_bottom()?;
        Ok(Self { frames: vec![bottom] })
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn top(&self) -> &StackFrame {
        self.frames.last().expect("bottom frame always present")
    }

    pub fn bottom(&self) -> &StackFrame {
        &self.frames[0]
    }

    /// Frames bottom first.
    pub fn frames(&self) -> &[StackFrame] {
        &self.frames
    }

    pub fn push(&mut self, mut frame: StackFrame) -> Result<(), MemoryError> {
        if frame.kind == ActionKind::UserQuery {
            return Err(MemoryError::DuplicateUserQuery);
        }
        frame.validate()?;
        frame.sequence_no = self.top().sequence_no + 1;
        self.frames.push(frame);
        Ok(())
    }

    pub fn pop(&mut self) -> Result<StackFrame, MemoryError> {
        if self.frames.len() == 1 {
            return Err(MemoryError::BottomImmutable);
        }
        Ok(self.frames.pop().expect("depth checked"))
    }

    /// Applies a composed action. `state` is the engine's state value before
    /// the action. On error the stack is unchanged.
    pub fn apply(&mut self, action: &ComposedAction, state: f64) -> Result<ApplyOutcome, MemoryError> {
        match action {
            ComposedAction::Thought(text) => {
                self.push(StackFrame::new(ActionKind::Thought, text.clone(), state))?;
                Ok(ApplyOutcome::default())
            }
            ComposedAction::Conclusion(text) => {
                self.push(StackFrame::new(ActionKind::Conclusion, text.clone(), state))?;
                Ok(ApplyOutcome::default())
            }
            ComposedAction::ToolObservation { tool, content } => {
                self.push(StackFrame::observation(tool.clone(), content.clone(), state))?;
                Ok(ApplyOutcome::default())
            }
            ComposedAction::Backtrack => {
                let popped = self.pop()?;
                let restoration = (popped.kind == ActionKind::Thought).then_some(popped.saved_state_value);
                Ok(ApplyOutcome { restoration, popped: Some(popped) })
            }
            ComposedAction::Summary(text) => {
                // The summary replaces the top frame's content and keeps its
                // kind, tool and saved state.
                let popped = self.pop()?;
                let mut summary = StackFrame::new(popped.kind, text.clone(), popped.saved_state_value);
                summary.tool_name = popped.tool_name.clone();
                self.push(summary)?;
                Ok(ApplyOutcome { restoration: None, popped: Some(popped) })
            }
        }
    }

    /// Bottom-to-top `Label: content` lines.
    pub fn render_context(&self) -> String {
        let mut out = String::new();
        for (i, frame) in self.frames.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(frame.kind.label());
            out.push_str(": ");
            out.push_str(&frame.content);
        }
        out
    }
}

impl StackFrame {
    fn validate_bottom(&self) -> Result<(), MemoryError> {
        if self.saved_state_value.is_nan() || self.saved_state_value <= 0.0 {
            return Err(MemoryError::InvalidStateValue(self.saved_state_value));
        }
        Ok(())
    }
}

/// Hex SHA-256 of a frame's content, as recorded in traces.
pub fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::ActionKind;

/// Labels a generator may emit, in prompt order.
pub const EMITTABLE: [ActionKind; 5] =
    [ActionKind::Thought, ActionKind::ToolUse, ActionKind::Summary, ActionKind::Backtrack, ActionKind::Conclusion];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub kind: ActionKind,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no action label found")]
    NoLabel,
    #[error("{0} action has no content")]
    EmptyContent(ActionKind),
}

/// Splits `line` into a known label and the rest, if it starts with one.
fn split_label(line: &str) -> Option<(ActionKind, &str)> {
    let (label, rest) = line.trim_start().split_once(':')?;
    let kind = ActionKind::from_label(label.trim())?;
    Some((kind, rest))
}

/// Reads the first `Label: content` pair. Content runs until the next line
/// that starts with any known label. `Tool_Use` content is reduced to the
/// bare tool name.
pub fn parse_action(raw: &str) -> Result<ParsedAction, ParseError> {
    let mut lines = raw.lines();
    let (kind, first) = loop {
        let line = lines.next().ok_or(ParseError::NoLabel)?;
        if let Some((kind, rest)) = split_label(line) {
            if EMITTABLE.contains(&kind) {
                break (kind, rest);
            }
        }
    };
    let mut content = first.trim().to_string();
    for line in lines {
        if split_label(line).is_some() {
            break;
        }
        content.push('\n');
        content.push_str(line);
    }
    let content = content.trim().to_string();

    match kind {
        ActionKind::ToolUse => {
            let name = content
                .split_whitespace()
                .next()
                .unwrap_or_default()
                .trim_matches(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
                .to_string();
            if name.is_empty() {
                return Err(ParseError::EmptyContent(kind));
            }
            Ok(ParsedAction { kind, content: name.clone(), tool_name: Some(name) })
        }
        ActionKind::Backtrack => Ok(ParsedAction { kind, content, tool_name: None }),
        _ if content.is_empty() => Err(ParseError::EmptyContent(kind)),
        _ => Ok(ParsedAction { kind, content, tool_name: None }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thought() {
        let a = parse_action("Thought: the dose must be converted to mg").unwrap();
        assert_eq!(a.kind, ActionKind::Thought);
        assert_eq!(a.content, "the dose must be converted to mg");
        assert_eq!(a.tool_name, None);
    }

    #[test]
    fn tool_use_is_bare_name() {
        let a = parse_action("Tool_Use: DOC_RAG").unwrap();
        assert_eq!((a.kind, a.tool_name.as_deref()), (ActionKind::ToolUse, Some("DOC_RAG")));
        let b = parse_action("Tool_Use:  `DOC_RAG`.\n").unwrap();
        assert_eq!(b.tool_name.as_deref(), Some("DOC_RAG"));
        assert_eq!(parse_action("Tool_Use:   "), Err(ParseError::EmptyContent(ActionKind::ToolUse)));
    }

    #[test]
    fn no_label() {
        assert_eq!(parse_action("hello world"), Err(ParseError::NoLabel));
        assert_eq!(parse_action(""), Err(ParseError::NoLabel));
        // Labels the generator must not produce are skipped.
        assert_eq!(parse_action("Tool_Observation: x"), Err(ParseError::NoLabel));
    }

    #[test]
    fn first_pair_wins_and_spans_lines() {
        let a = parse_action("preamble\nThought: line one\nline two\nConclusion: B").unwrap();
        assert_eq!(a.kind, ActionKind::Thought);
        assert_eq!(a.content, "line one\nline two");
    }

    #[test]
    fn backtrack_may_be_empty() {
        let a = parse_action("Backtrack:").unwrap();
        assert_eq!((a.kind, a.content.as_str()), (ActionKind::Backtrack, ""));
        assert!(parse_action("Conclusion:  ").is_err());
    }
}

//! Deterministic generators for the evaluation suite.

use rand::seq::SliceRandom;
use rand::Rng;

use super::suite::NOISE_MARKER;
use crate::engine::{ActionGenerator, Generation, GenerationRequest, GeneratorError, PlaybookEntry};
use crate::memory::ActionKind;
use crate::monitor::TokenProbSequence;
use crate::retrieval::tokenize;

/// cppl ~1.05, uct ~0.39.
pub fn confident_probs() -> Vec<f64> {
    vec![0.95; 8]
}

/// cppl ~16.5, uct ~20.7: above the default threshold of both metrics.
pub fn uncertain_probs() -> Vec<f64> {
    (0..100).map(|i| if i % 2 == 0 { 0.01 } else { 0.3679 }).collect()
}

const LETTERS: [&str; 4] = ["A", "B", "C", "D"];
const TOOL: &str = "DOC_RAG";

/// Reads the rendered stack and reacts like a cautious agent:
///
/// * with nothing but the question it blurts out an unsure first guess;
/// * after a thought it retrieves;
/// * an observation with tagged noise is summarized down to its clean lines
///   (partial noise) or backtracked over (pure noise); when those actions
///   are not offered it trusts the noise and answers confidently;
/// * a clean observation yields a confident answer.
#[derive(Debug, Clone, Default)]
pub struct NoiseAwareGenerator;

struct Frame<'a> {
    label: &'a str,
    lines: Vec<&'a str>,
}

fn parse_context(context: &str) -> Vec<Frame<'_>> {
    let mut frames: Vec<Frame> = Vec::new();
    for line in context.lines() {
        let head = ActionKind::ALL
            .iter()
            .find_map(|k| line.strip_prefix(k.label()).and_then(|r| r.strip_prefix(": ")).map(|r| (k.label(), r)));
        match (head, frames.last_mut()) {
            (Some((label, rest)), _) => frames.push(Frame { label, lines: vec![rest] }),
            (None, Some(f)) => f.lines.push(line),
            (None, None) => {}
        }
    }
    frames
}

fn offered(prompt: &str, kind: ActionKind) -> bool {
    let prefix = format!("{}:", kind.label());
    prompt.lines().any(|l| l.starts_with(&prefix))
}

struct Question {
    subject: Vec<String>,
    options: Option<Vec<String>>,
}

fn parse_question(query: &str) -> Question {
    let (head, options) = match query.split_once("Options:") {
        Some((h, o)) => {
            let opts = o
                .split(';')
                .filter_map(|p| p.trim().split_once(") ").map(|(_, name)| name.trim().to_lowercase()))
                .collect();
            (h, Some(opts))
        }
        None => (query, None),
    };
    let subject = head
        .trim()
        .trim_end_matches('?')
        .trim_start_matches("Which remedies treat ")
        .trim_start_matches("How is ")
        .trim_end_matches(" treated");
    Question { subject: tokenize(subject), options }
}

fn strip_tag(line: &str) -> &str {
    match line.strip_prefix('[').and_then(|r| r.split_once("] ")) {
        Some((_, rest)) => rest,
        None => line,
    }
}

fn answer_from(question: &Question, lines: &[&str]) -> String {
    let about: Vec<Vec<String>> =
        lines.iter().map(|l| tokenize(l)).filter(|t| question.subject.iter().all(|s| t.contains(s))).collect();
    match &question.options {
        Some(opts) => {
            let letters: Vec<&str> =
                opts.iter().zip(LETTERS).filter(|(o, _)| about.iter().any(|t| t.contains(o))).map(|(_, l)| l).collect();
            if letters.is_empty() {
                "A".to_string()
            } else {
                letters.join(",")
            }
        }
        None => {
            let line = lines
                .iter()
                .find(|l| question.subject.iter().all(|s| tokenize(l).contains(s)))
                .or(lines.first())
                .copied()
                .unwrap_or("");
            strip_tag(line).to_string()
        }
    }
}

impl NoiseAwareGenerator {
    fn decide(&self, request: &GenerationRequest) -> (String, Vec<f64>) {
        let frames = parse_context(&request.context);
        let question = parse_question(&frames.first().map(|f| f.lines.join("\n")).unwrap_or_default());
        let sure = confident_probs();
        let Some(top) = frames.last() else {
            return ("Thought: nothing to read".into(), sure);
        };
        if top.label == ActionKind::UserQuery.label() {
            let guess = if question.options.is_some() { "A" } else { "I am not sure" };
            return (format!("Conclusion: {guess}"), uncertain_probs());
        }
        if top.label != ActionKind::ToolObservation.label() {
            return (format!("Tool_Use: {TOOL}"), sure);
        }
        let (noise, clean): (Vec<&str>, Vec<&str>) = top.lines.iter().partition(|l| l.starts_with(NOISE_MARKER));
        if noise.is_empty() {
            return (format!("Conclusion: {}", answer_from(&question, &clean)), sure);
        }
        if !clean.is_empty() && offered(&request.prompt, ActionKind::Summary) {
            return (format!("Summary: {}", clean.join("\n")), sure);
        }
        if offered(&request.prompt, ActionKind::Backtrack) {
            return ("Backtrack: the retrieved text is noise".into(), sure);
        }
        (format!("Conclusion: {}", answer_from(&question, &top.lines)), sure)
    }
}

impl ActionGenerator for NoiseAwareGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<Generation, GeneratorError> {
        let (text, probs) = self.decide(request);
        let tokens =
            TokenProbSequence::from_probs(&probs).map_err(|source| GeneratorError::Playbook { index: 0, source })?;
        Ok(Generation { text, tokens })
    }
}

/// A random playbook mixing every action, unparseable output, and
/// confident, unsure and arbitrary probability profiles.
pub fn random_playbook<R: Rng>(rng: &mut R, len: usize) -> Vec<PlaybookEntry> {
    (0..len)
        .map(|i| {
            let text = match rng.gen_range(0..7) {
                0 => format!("Thought: step {i}"),
                1 => "Tool_Use: DOC_RAG".to_string(),
                2 => "Tool_Use: NO_SUCH_TOOL".to_string(),
                3 => "Backtrack:".to_string(),
                4 => format!("Summary: condensed {i}"),
                5 => format!("Conclusion: answer {i}"),
                _ => ["", "I think so", "Conclusion:"].choose(rng).expect("non-empty").to_string(),
            };
            let probs = match rng.gen_range(0..3) {
                0 => confident_probs(),
                1 => uncertain_probs(),
                _ => (0..rng.gen_range(1..24)).map(|_| rng.gen_range(0.001..=1.0)).collect(),
            };
            PlaybookEntry::new(text, probs)
        })
        .collect()
}

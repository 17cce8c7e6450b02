use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TuringError;

/// Index into a machine's tape alphabet. Index 0 is always the blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u16);

impl Symbol {
    pub const BLANK: Symbol = Symbol(0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub next: StateId,
    pub write: Symbol,
    pub movement: Move,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Accept,
    Reject,
    BudgetExhausted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Accept => write!(f, "accept"),
            Outcome::Reject => write!(f, "reject"),
            Outcome::BudgetExhausted => write!(f, "budget-exhausted"),
        }
    }
}

/// On-disk machine description.
///
/// Transitions are `[state, read, next_state, write, move]` rows. The blank
/// symbol must appear in `tape_alphabet` and must not appear in
/// `input_alphabet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    #[serde(default)]
    pub name: String,
    pub states: Vec<String>,
    pub input_alphabet: Vec<String>,
    pub tape_alphabet: Vec<String>,
    pub blank: String,
    pub transitions: Vec<(String, String, String, String, Move)>,
    pub start: String,
    pub accept: String,
    pub reject: String,
}

/// A deterministic single-tape machine over a two-way unbounded tape.
#[derive(Debug, Clone, PartialEq)]
pub struct TuringMachine {
    name: String,
    states: Vec<String>,
    symbols: Vec<String>,
    input_alphabet: Vec<Symbol>,
    table: Vec<Option<Transition>>,
    start: StateId,
    accept: StateId,
    reject: StateId,
}

impl TuringMachine {
    pub fn from_spec(spec: &MachineSpec) -> Result<Self, TuringError> {
        let state_index = index_names(&spec.states, "state")?;
        if !spec.tape_alphabet.contains(&spec.blank) {
            return Err(TuringError::InvalidMachine(format!("blank {:?} missing from tape alphabet", spec.blank)));
        }
        if spec.input_alphabet.contains(&spec.blank) {
            return Err(TuringError::InvalidMachine("blank must not be an input symbol".into()));
        }
        // Blank goes first so that Symbol::BLANK is index 0.
        let mut symbols = vec![spec.blank.clone()];
        symbols.extend(spec.tape_alphabet.iter().filter(|s| **s != spec.blank).cloned());
        let symbol_index = index_names(&symbols, "tape symbol")?;

        let mut input_alphabet = Vec::with_capacity(spec.input_alphabet.len());
        for s in &spec.input_alphabet {
            let sym = symbol_index
                .get(s.as_str())
                .ok_or_else(|| TuringError::InvalidMachine(format!("input symbol {s:?} not in tape alphabet")))?;
            input_alphabet.push(Symbol(*sym));
        }

        let lookup_state = |name: &str| {
            state_index
                .get(name)
                .map(|i| StateId(*i))
                .ok_or_else(|| TuringError::InvalidMachine(format!("unknown state {name:?}")))
        };
        let lookup_symbol = |name: &str| {
            symbol_index
                .get(name)
                .map(|i| Symbol(*i))
                .ok_or_else(|| TuringError::InvalidMachine(format!("unknown symbol {name:?}")))
        };

        let start = lookup_state(&spec.start)?;
        let accept = lookup_state(&spec.accept)?;
        let reject = lookup_state(&spec.reject)?;
        if accept == reject {
            return Err(TuringError::InvalidMachine("accept and reject states must differ".into()));
        }

        let width = symbols.len();
        let mut table = vec![None; spec.states.len() * width];
        for (from, read, next, write, movement) in &spec.transitions {
            let from = lookup_state(from)?;
            if from == accept || from == reject {
                return Err(TuringError::InvalidMachine(format!(
                    "transition defined from halting state {:?}",
                    spec.states[from.0 as usize]
                )));
            }
            let read = lookup_symbol(read)?;
            let slot = &mut table[from.0 as usize * width + read.0 as usize];
            if slot.is_some() {
                return Err(TuringError::InvalidMachine(format!(
                    "duplicate transition for ({:?}, {:?})",
                    spec.states[from.0 as usize], symbols[read.0 as usize]
                )));
            }
            *slot = Some(Transition { next: lookup_state(next)?, write: lookup_symbol(write)?, movement: *movement });
        }

        for (q, name) in spec.states.iter().enumerate() {
            let q = StateId(q as u16);
            if q == accept || q == reject {
                continue;
            }
            for (a, sym) in symbols.iter().enumerate() {
                if table[q.0 as usize * width + a].is_none() {
                    return Err(TuringError::InvalidMachine(format!(
                        "transition table not total: missing ({name:?}, {sym:?})"
                    )));
                }
            }
        }

        Ok(Self {
            name: spec.name.clone(),
            states: spec.states.clone(),
            symbols,
            input_alphabet,
            table,
            start,
            accept,
            reject,
        })
    }

    pub fn to_spec(&self) -> MachineSpec {
        let mut transitions = Vec::new();
        for q in 0..self.states.len() {
            for a in 0..self.symbols.len() {
                if let Some(t) = self.table[q * self.symbols.len() + a] {
                    transitions.push((
                        self.states[q].clone(),
                        self.symbols[a].clone(),
                        self.states[t.next.0 as usize].clone(),
                        self.symbols[t.write.0 as usize].clone(),
                        t.movement,
                    ));
                }
            }
        }
        MachineSpec {
            name: self.name.clone(),
            states: self.states.clone(),
            input_alphabet: self.input_alphabet.iter().map(|s| self.symbols[s.0 as usize].clone()).collect(),
            tape_alphabet: self.symbols.clone(),
            blank: self.symbols[0].clone(),
            transitions,
            start: self.states[self.start.0 as usize].clone(),
            accept: self.states[self.accept.0 as usize].clone(),
            reject: self.states[self.reject.0 as usize].clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.states[q.0 as usize]
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_name(&self, a: Symbol) -> &str {
        &self.symbols[a.0 as usize]
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.symbols.iter().position(|s| s == name).map(|i| Symbol(i as u16))
    }

    pub fn input_alphabet(&self) -> &[Symbol] {
        &self.input_alphabet
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn accept(&self) -> StateId {
        self.accept
    }

    pub fn reject(&self) -> StateId {
        self.reject
    }

    pub fn is_halting(&self, q: StateId) -> bool {
        q == self.accept || q == self.reject
    }

    /// The transition for a non-halting state, `None` for accept/reject.
    pub fn transition(&self, q: StateId, a: Symbol) -> Option<Transition> {
        self.table[q.0 as usize * self.symbols.len() + a.0 as usize]
    }

    /// Parses an input word, one symbol per character.
    pub fn parse_input(&self, word: &str) -> Result<Vec<Symbol>, TuringError> {
        word.chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                self.parse_symbols(&[c.encode_utf8(&mut buf).to_string()]).map(|v| v[0])
            })
            .collect()
    }

    pub fn parse_symbols(&self, names: &[String]) -> Result<Vec<Symbol>, TuringError> {
        names
            .iter()
            .map(|n| {
                self.symbol(n)
                    .filter(|s| self.input_alphabet.contains(s))
                    .ok_or_else(|| TuringError::InvalidInput(format!("{n:?} is not an input symbol")))
            })
            .collect()
    }

    pub fn render_word(&self, word: &[Symbol]) -> String {
        word.iter().map(|s| self.symbol_name(*s)).collect()
    }

    pub fn initial_configuration(&self, input: &[Symbol]) -> Result<TmConfiguration, TuringError> {
        if let Some(bad) = input.iter().find(|s| !self.input_alphabet.contains(s)) {
            return Err(TuringError::InvalidInput(format!(
                "symbol {:?} is not an input symbol",
                self.symbols.get(bad.0 as usize)
            )));
        }
        let (head, rest) = match input.split_first() {
            Some((h, rest)) => (*h, rest),
            None => (Symbol::BLANK, &[][..]),
        };
        Ok(TmConfiguration::new(self.start, Vec::new(), head, rest.to_vec()))
    }
}

fn index_names<'a>(names: &'a [String], what: &str) -> Result<HashMap<&'a str, u16>, TuringError> {
    let mut out = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if out.insert(n.as_str(), i as u16).is_some() {
            return Err(TuringError::InvalidMachine(format!("duplicate {what} {n:?}")));
        }
    }
    if names.len() > u16::MAX as usize {
        return Err(TuringError::InvalidMachine(format!("too many {what}s")));
    }
    Ok(out)
}

/// Tape snapshot `(state, left, head, right)`.
///
/// `right` is kept reversed internally so the cell next to the head sits at
/// the end of the vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TmConfiguration {
    state: StateId,
    left: Vec<Symbol>,
    head: Symbol,
    right_rev: Vec<Symbol>,
}

impl TmConfiguration {
    /// `right` is given leftmost first.
    pub fn new(state: StateId, left: Vec<Symbol>, head: Symbol, right: Vec<Symbol>) -> Self {
        let mut right_rev = right;
        right_rev.reverse();
        Self { state, left, head, right_rev }
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn left(&self) -> &[Symbol] {
        &self.left
    }

    pub fn head(&self) -> Symbol {
        self.head
    }

    /// Cells right of the head, leftmost first.
    pub fn right(&self) -> Vec<Symbol> {
        self.right_rev.iter().rev().copied().collect()
    }

    pub(crate) fn right_reversed(&self) -> &[Symbol] {
        &self.right_rev
    }

    /// Applies one transition in place and returns the move taken.
    pub fn advance(&mut self, tm: &TuringMachine) -> Result<Move, TuringError> {
        let t = tm
            .transition(self.state, self.head)
            .ok_or_else(|| TuringError::Halted(format!("state {:?} is halting", tm.state_name(self.state))))?;
        self.state = t.next;
        match t.movement {
            Move::R => {
                self.left.push(t.write);
                self.head = self.right_rev.pop().unwrap_or(Symbol::BLANK);
            }
            Move::L => {
                self.right_rev.push(t.write);
                self.head = self.left.pop().unwrap_or(Symbol::BLANK);
            }
        }
        Ok(t.movement)
    }

    pub fn render(&self, tm: &TuringMachine) -> String {
        format!(
            "({}, {}[{}]{})",
            tm.state_name(self.state),
            tm.render_word(&self.left),
            tm.symbol_name(self.head),
            tm.render_word(&self.right())
        )
    }
}

/// One native step. Stepping out of accept/reject is an error.
pub fn tm_step(tm: &TuringMachine, c: &TmConfiguration) -> Result<TmConfiguration, TuringError> {
    let mut next = c.clone();
    next.advance(tm)?;
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct TmRun {
    pub outcome: Outcome,
    pub steps: u64,
    pub config: TmConfiguration,
}

pub fn run_tm(tm: &TuringMachine, input: &[Symbol], budget: u64) -> Result<TmRun, TuringError> {
    if budget == 0 {
        return Err(TuringError::InvalidInput("budget must be at least 1".into()));
    }
    let mut config = tm.initial_configuration(input)?;
    let mut steps = 0;
    loop {
        if config.state == tm.accept {
            return Ok(TmRun { outcome: Outcome::Accept, steps, config });
        }
        if config.state == tm.reject {
            return Ok(TmRun { outcome: Outcome::Reject, steps, config });
        }
        if steps == budget {
            return Ok(TmRun { outcome: Outcome::BudgetExhausted, steps, config });
        }
        config.advance(tm)?;
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turing::fixtures;

    fn ones_only() -> TuringMachine {
        // The two-rule machine: skip 1s, accept on blank.
        TuringMachine::from_spec(&MachineSpec {
            name: "two-rule".into(),
            states: vec!["q0".into(), "qa".into(), "qr".into()],
            input_alphabet: vec!["1".into()],
            tape_alphabet: vec!["_".into(), "1".into()],
            blank: "_".into(),
            transitions: vec![
                ("q0".into(), "1".into(), "q0".into(), "1".into(), Move::R),
                ("q0".into(), "_".into(), "qa".into(), "_".into(), Move::R),
            ],
            start: "q0".into(),
            accept: "qa".into(),
            reject: "qr".into(),
        })
        .unwrap()
    }

    #[test]
    fn step_over_a_one() {
        let tm = ones_only();
        let one = tm.symbol("1").unwrap();
        let c = TmConfiguration::new(tm.start(), vec![], one, vec![one]);
        let next = tm_step(&tm, &c).unwrap();
        assert_eq!(next, TmConfiguration::new(tm.start(), vec![one], one, vec![]));
    }

    #[test]
    fn step_extends_with_blank() {
        let tm = ones_only();
        let one = tm.symbol("1").unwrap();
        let c = TmConfiguration::new(tm.start(), vec![one, one], Symbol::BLANK, vec![]);
        let next = tm_step(&tm, &c).unwrap();
        assert_eq!(next, TmConfiguration::new(tm.accept(), vec![one, one, Symbol::BLANK], Symbol::BLANK, vec![]));
    }

    #[test]
    fn left_off_the_end_reads_blank() {
        let tm = fixtures::unary_increment();
        let input = tm.parse_input("11").unwrap();
        let c = tm.initial_configuration(&input).unwrap();
        let next = tm_step(&tm, &c).unwrap();
        assert!(next.left().is_empty());
        assert_eq!(next.head(), Symbol::BLANK);
        assert_eq!(next.right(), input);
    }

    #[test]
    fn stepping_a_halted_machine_is_an_error() {
        let tm = ones_only();
        let c = TmConfiguration::new(tm.accept(), vec![], Symbol::BLANK, vec![]);
        assert!(matches!(tm_step(&tm, &c), Err(TuringError::Halted(_))));
    }

    #[test]
    fn run_counts() {
        let tm = ones_only();
        let run = run_tm(&tm, &tm.parse_input("111").unwrap(), 100).unwrap();
        assert_eq!((run.outcome, run.steps), (Outcome::Accept, 4));
        let run = run_tm(&tm, &[], 100).unwrap();
        assert_eq!((run.outcome, run.steps), (Outcome::Accept, 1));
        let looper = fixtures::looper();
        let run = run_tm(&looper, &[], 100).unwrap();
        assert_eq!((run.outcome, run.steps), (Outcome::BudgetExhausted, 100));
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(run_tm(&ones_only(), &[], 0).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = ones_only().to_spec();
        spec.input_alphabet.push("_".into());
        assert!(TuringMachine::from_spec(&spec).is_err());

        let mut spec = ones_only().to_spec();
        spec.reject = spec.accept.clone();
        assert!(TuringMachine::from_spec(&spec).is_err());

        let mut spec = ones_only().to_spec();
        spec.transitions.pop();
        assert!(matches!(
            TuringMachine::from_spec(&spec),
            Err(TuringError::InvalidMachine(m)) if m.contains("not total")
        ));

        let mut spec = ones_only().to_spec();
        spec.transitions.push(("qa".into(), "1".into(), "q0".into(), "1".into(), Move::R));
        assert!(TuringMachine::from_spec(&spec).is_err());
    }

    #[test]
    fn spec_round_trips() {
        for tm in fixtures::all() {
            let back = TuringMachine::from_spec(&tm.to_spec()).unwrap();
            assert_eq!(back, tm);
        }
    }

    #[test]
    fn input_outside_alphabet_rejected() {
        let tm = ones_only();
        assert!(tm.parse_input("12").is_err());
        assert!(tm.parse_input("_").is_err());
    }
}

//! The stack-memory machine built from a Turing machine.
//!
//! A TC configuration is `(state value, remaining, stack, halted)`. The stack
//! holds the cells left of the head in tape order with the head cell on top,
//! so a pop exposes the cell adjacent-left of the head. `remaining` is the
//! second storage: the cells right of the head, consumed from the front and
//! blank-extended once exhausted.

use serde::Serialize;

use super::machine::{Move, StateId, Symbol, TmConfiguration, TuringMachine};
use super::{TuringError, LARGE_VALUE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// Either a source-machine state or the distinguished final state `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TcState {
    Running(StateId),
    Final(Verdict),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMode {
    /// Distinct values `s0 + rank` per source state, `sigma / 2` for `f`.
    Graded,
    /// Binary flag values: 1 while running, 0 once halted, with `sigma = 1`.
    Sama,
}

/// Stack meta-operation performed by one derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackOp {
    /// Right move: overwrite the top, then push the next remaining cell.
    Push,
    /// Left move: pop the top, prepending the written cell to `remaining`.
    Pop,
    /// Push a blank onto an emptied stack (second half of a left move off
    /// the leftmost written cell).
    Refill,
    NoOp,
}

impl StackOp {
    pub fn is_push_class(self) -> bool {
        matches!(self, StackOp::Push | StackOp::Refill)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcMachine {
    source: TuringMachine,
    sigma: f64,
    initial_value: f64,
    mode: ValueMode,
    // Fault injection for checker tests: left moves are executed as pushes.
    left_as_push: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateValueEntry {
    pub state: String,
    pub value: f64,
}

/// Builds the graded construction with the given threshold.
pub fn construct_tc(tm: &TuringMachine, sigma: f64) -> Result<TcMachine, TuringError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(TuringError::InvalidSigma(sigma));
    }
    Ok(TcMachine {
        source: tm.clone(),
        sigma,
        initial_value: LARGE_VALUE.max(2.0 * sigma),
        mode: ValueMode::Graded,
        left_as_push: false,
    })
}

/// Binary-flag construction: `sigma = 1`, running value 1, final value 0.
pub fn construct_sama(tm: &TuringMachine) -> TcMachine {
    TcMachine { source: tm.clone(), sigma: 1.0, initial_value: 1.0, mode: ValueMode::Sama, left_as_push: false }
}

impl TcMachine {
    pub fn source(&self) -> &TuringMachine {
        &self.source
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mode(&self) -> ValueMode {
        self.mode
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    /// Value carried by the final state `f`.
    pub fn final_value(&self) -> f64 {
        match self.mode {
            ValueMode::Graded => self.sigma / 2.0,
            ValueMode::Sama => 0.0,
        }
    }

    pub fn value_of(&self, state: TcState) -> f64 {
        match (state, self.mode) {
            (TcState::Final(_), _) => self.final_value(),
            (TcState::Running(_), ValueMode::Sama) => 1.0,
            (TcState::Running(q), ValueMode::Graded) => self.initial_value + self.rank(q) as f64,
        }
    }

    // Start state first, then the rest in declaration order.
    fn rank(&self, q: StateId) -> u16 {
        let start = self.source.start();
        if q == start {
            0
        } else if q < start {
            q.0 + 1
        } else {
            q.0
        }
    }

    /// The state set `S = S_T ∪ {f}` with their values.
    pub fn state_values(&self) -> Vec<StateValueEntry> {
        let mut out: Vec<_> = (0..self.source.state_count())
            .map(|i| {
                let q = StateId(i as u16);
                StateValueEntry {
                    state: self.source.state_name(q).to_string(),
                    value: self.value_of(TcState::Running(q)),
                }
            })
            .collect();
        out.push(StateValueEntry { state: "f".into(), value: self.final_value() });
        out
    }

    pub fn actions(&self) -> &[Symbol] {
        self.source.input_alphabet()
    }

    pub fn stack_alphabet(&self) -> Vec<Symbol> {
        (0..self.source.symbol_count()).map(|i| Symbol(i as u16)).collect()
    }

    /// Operation class chosen by the transition function for `(state, top)`.
    pub fn operation(&self, state: TcState, top: Option<Symbol>) -> StackOp {
        match (state, top) {
            (TcState::Final(_), _) => StackOp::NoOp,
            // An emptied stack is refilled before anything else, so a left
            // move into accept/reject still settles before the halt.
            (TcState::Running(_), None) => StackOp::Refill,
            (TcState::Running(q), _) if self.source.is_halting(q) => StackOp::NoOp,
            (TcState::Running(q), Some(a)) => {
                let t = self.source.transition(q, a).expect("total on non-halting states");
                match t.movement {
                    Move::R => StackOp::Push,
                    Move::L if self.left_as_push => StackOp::Push,
                    Move::L => StackOp::Pop,
                }
            }
        }
    }

    /// A copy of this machine that executes left moves as pushes. Used to
    /// confirm the commutation checker catches a broken construction.
    pub fn with_left_moves_as_push(mut self) -> Self {
        self.left_as_push = true;
        self
    }

    pub fn initial_configuration(&self, input: &[Symbol]) -> Result<TcConfiguration, TuringError> {
        let c = self.source.initial_configuration(input)?;
        Ok(self.map(&c))
    }

    /// `h` with this machine's state-value assignment.
    pub fn map(&self, c: &TmConfiguration) -> TcConfiguration {
        let state = TcState::Running(c.state());
        map_config_with_state(c, state, self.value_of(state), self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcConfiguration {
    state: TcState,
    state_value: f64,
    sigma: f64,
    remaining_rev: Vec<Symbol>,
    stack: Vec<Symbol>,
    halted: bool,
}

/// The configuration mapping `h`.
///
/// `remaining` is the right part of the tape; the stack is the left part in
/// tape order with the head on top. The flag is derived from the value.
pub fn map_config(c: &TmConfiguration, state_value: f64, sigma: f64) -> TcConfiguration {
    map_config_with_state(c, TcState::Running(c.state()), state_value, sigma)
}

fn map_config_with_state(c: &TmConfiguration, state: TcState, state_value: f64, sigma: f64) -> TcConfiguration {
    let mut stack = Vec::with_capacity(c.left().len() + 1);
    stack.extend_from_slice(c.left());
    stack.push(c.head());
    TcConfiguration::new(state, state_value, sigma, c.right_reversed().to_vec(), stack)
}

impl TcConfiguration {
    fn new(state: TcState, state_value: f64, sigma: f64, remaining_rev: Vec<Symbol>, stack: Vec<Symbol>) -> Self {
        Self { state, state_value, sigma, remaining_rev, stack, halted: state_value < sigma }
    }

    pub fn state(&self) -> TcState {
        self.state
    }

    pub fn state_value(&self) -> f64 {
        self.state_value
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    /// Remaining cells, front first.
    pub fn remaining(&self) -> Vec<Symbol> {
        self.remaining_rev.iter().rev().copied().collect()
    }

    /// Stack contents, bottom first.
    pub fn stack(&self) -> &[Symbol] {
        &self.stack
    }

    pub fn top(&self) -> Option<Symbol> {
        self.stack.last().copied()
    }

    /// True when the stack holds at least the head cell, i.e. the
    /// configuration is an image of some tape configuration.
    pub fn is_settled(&self) -> bool {
        !self.stack.is_empty() || self.halted
    }

    /// Allocation-free `map(c) == *self` for a machine's value assignment.
    pub fn is_image_of(&self, tc: &TcMachine, c: &TmConfiguration) -> bool {
        self.is_image_of_above(tc, c, 0, 0)
    }

    /// Like [`is_image_of`](Self::is_image_of) but assumes stack cells below
    /// `stack_from` and remaining cells below `rest_from` (counted from the
    /// far end) are already known to agree.
    pub(crate) fn is_image_of_above(
        &self,
        tc: &TcMachine,
        c: &TmConfiguration,
        stack_from: usize,
        rest_from: usize,
    ) -> bool {
        let state = TcState::Running(c.state());
        let left = c.left();
        let right = c.right_reversed();
        let (s, r) = (stack_from.min(left.len()), rest_from.min(right.len()));
        self.state == state
            && self.state_value == tc.value_of(state)
            && self.halted == (self.state_value < tc.sigma)
            && self.stack.len() == left.len() + 1
            && self.stack[s..left.len()] == left[s..]
            && self.stack.last() == Some(&c.head())
            && self.remaining_rev.len() == right.len()
            && self.remaining_rev[r..] == right[r..]
    }

    pub(crate) fn remaining_len(&self) -> usize {
        self.remaining_rev.len()
    }

    /// One derivation in place; returns the meta-operation performed.
    pub fn advance(&mut self, tc: &TcMachine) -> Result<StackOp, TuringError> {
        if self.halted {
            return Err(TuringError::Halted("configuration already halted".into()));
        }
        let TcState::Running(q) = self.state else {
            return Err(TuringError::Halted("final state reached".into()));
        };
        let src = &tc.source;
        let op = tc.operation(self.state, self.top());
        match op {
            StackOp::NoOp => {
                let verdict = if q == src.accept() { Verdict::Accept } else { Verdict::Reject };
                self.set_state(tc, TcState::Final(verdict));
            }
            StackOp::Refill => {
                self.stack.push(Symbol::BLANK);
            }
            StackOp::Push => {
                let top = self.stack.pop().expect("push requires a head cell");
                let t = src.transition(q, top).expect("total on non-halting states");
                self.stack.push(t.write);
                let next = self.remaining_rev.pop().unwrap_or(Symbol::BLANK);
                self.stack.push(next);
                self.set_state(tc, TcState::Running(t.next));
            }
            StackOp::Pop => {
                let top = self.stack.pop().expect("pop requires a head cell");
                let t = src.transition(q, top).expect("total on non-halting states");
                self.remaining_rev.push(t.write);
                self.set_state(tc, TcState::Running(t.next));
            }
        }
        Ok(op)
    }

    fn set_state(&mut self, tc: &TcMachine, state: TcState) {
        self.state = state;
        self.state_value = tc.value_of(state);
        self.halted = self.state_value < self.sigma;
    }

    pub fn render(&self, tm: &TuringMachine) -> String {
        let state = match self.state {
            TcState::Running(q) => tm.state_name(q).to_string(),
            TcState::Final(v) => format!("f:{v:?}"),
        };
        format!(
            "({state}={}, {}, [{}], {})",
            self.state_value,
            tm.render_word(&self.remaining()),
            tm.render_word(&self.stack),
            if self.halted { "halt" } else { "continue" }
        )
    }
}

/// One derivation, functional form.
pub fn tc_step(tc: &TcMachine, c: &TcConfiguration) -> Result<(TcConfiguration, StackOp), TuringError> {
    let mut next = c.clone();
    let op = next.advance(tc)?;
    Ok((next, op))
}

#[derive(Debug, Clone)]
pub struct TcRun {
    pub outcome: super::Outcome,
    /// Completed simulated moves (settled configurations reached).
    pub moves: u64,
    /// Total derivations, including refills and the final no-op.
    pub derivations: u64,
    pub config: TcConfiguration,
}

/// Runs the stack machine alone. The budget counts simulated moves, so it
/// lines up with the native step budget.
pub fn run_tc(tc: &TcMachine, input: &[Symbol], budget: u64) -> Result<TcRun, TuringError> {
    if budget == 0 {
        return Err(TuringError::InvalidInput("budget must be at least 1".into()));
    }
    let mut config = tc.initial_configuration(input)?;
    let mut moves = 0;
    let mut derivations = 0;
    loop {
        if config.halted {
            let outcome = match config.state {
                TcState::Final(Verdict::Accept) => super::Outcome::Accept,
                TcState::Final(Verdict::Reject) => super::Outcome::Reject,
                // Only reachable if a running value were below sigma.
                TcState::Running(_) => super::Outcome::BudgetExhausted,
            };
            return Ok(TcRun { outcome, moves, derivations, config });
        }
        let pending_halt = matches!(tc.operation(config.state, config.top()), StackOp::NoOp);
        if moves == budget && !pending_halt {
            return Ok(TcRun { outcome: super::Outcome::BudgetExhausted, moves, derivations, config });
        }
        config.advance(tc)?;
        derivations += 1;
        if !pending_halt && config.is_settled() {
            moves += 1;
        }
    }
}

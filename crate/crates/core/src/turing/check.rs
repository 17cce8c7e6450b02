//! Executable checks of step commutation and the halting biconditional.

use serde::Serialize;

use super::machine::{Move, Outcome, Symbol, TuringMachine};
use super::tc::{run_tc, StackOp, TcMachine, TcState, Verdict};
use super::{run_tm, TuringError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutationFailure {
    /// 1-based native step index.
    pub step: u64,
    pub movement: Option<Move>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub machine: String,
    pub input: String,
    pub native_outcome: Outcome,
    pub tc_outcome: Outcome,
    pub steps_native: u64,
    pub steps_tc: u64,
    pub failures: Vec<CommutationFailure>,
    pub success: bool,
}

/// Runs native and stack executions in lockstep.
///
/// After every native step the stack machine advances by derivations until
/// it settles (at most two). The settled configuration must equal `h` of the
/// new native configuration, and the first operation must match the move
/// direction. A mismatch is recorded and the stack side is resynchronised to
/// `h` so later steps are still checked.
///
/// Both sides change their cell vectors only at the open end, so each step
/// compares the cells at or above the lowest level either side reached since
/// the previous check. Whole configurations are compared at power-of-two
/// steps and on the final step.
pub fn check_lemma1(tc: &TcMachine, input: &[Symbol], budget: u64) -> Result<EquivalenceReport, TuringError> {
    if budget == 0 {
        return Err(TuringError::InvalidInput("budget must be at least 1".into()));
    }
    let tm = tc.source();
    let mut native = tm.initial_configuration(input)?;
    let mut sim = tc.map(&native);
    let mut failures = Vec::new();
    let mut steps_native = 0;
    let mut steps_tc = 0;

    let native_outcome = loop {
        if native.state() == tm.accept() {
            break Outcome::Accept;
        }
        if native.state() == tm.reject() {
            break Outcome::Reject;
        }
        if steps_native == budget {
            break Outcome::BudgetExhausted;
        }
        // Lowest index of each vector that may have changed this step.
        let mut stack_low = native.left().len().min(sim.stack().len()).saturating_sub(1);
        let mut rest_low = native.right_reversed().len().min(sim.remaining_len()).saturating_sub(1);
        let movement = native.advance(tm)?;
        steps_native += 1;
        stack_low = stack_low.min(native.left().len().saturating_sub(1));
        rest_low = rest_low.min(native.right_reversed().len().saturating_sub(1));

        let mut buf = [StackOp::NoOp; 3];
        let mut n_ops = 0;
        loop {
            buf[n_ops] = sim.advance(tc)?;
            n_ops += 1;
            steps_tc += 1;
            stack_low = stack_low.min(sim.stack().len().saturating_sub(1));
            rest_low = rest_low.min(sim.remaining_len().saturating_sub(1));
            if sim.is_settled() || n_ops == 3 {
                break;
            }
        }
        let ops = &buf[..n_ops];
        let full = steps_native.is_power_of_two() || tm.is_halting(native.state()) || steps_native == budget;
        if full {
            (stack_low, rest_low) = (0, 0);
        }
        let expected_first = match movement {
            Move::R => StackOp::Push,
            Move::L => StackOp::Pop,
        };
        if ops[0] != expected_first {
            failures.push(CommutationFailure {
                step: steps_native,
                movement: Some(movement),
                detail: format!("expected {expected_first:?} first, got {ops:?}"),
            });
        }
        if ops.len() > 2 || !sim.is_image_of_above(tc, &native, stack_low, rest_low) {
            failures.push(CommutationFailure {
                step: steps_native,
                movement: Some(movement),
                detail: format!("after {ops:?}: got {} expected {}", sim.render(tm), tc.map(&native).render(tm)),
            });
            sim = tc.map(&native);
        }
    };

    let tc_outcome = match native_outcome {
        Outcome::BudgetExhausted => Outcome::BudgetExhausted,
        _ => {
            let op = sim.advance(tc)?;
            steps_tc += 1;
            let outcome = match sim.state() {
                TcState::Final(Verdict::Accept) if sim.halted() => Outcome::Accept,
                TcState::Final(Verdict::Reject) if sim.halted() => Outcome::Reject,
                _ => Outcome::BudgetExhausted,
            };
            if op != StackOp::NoOp || outcome != native_outcome {
                failures.push(CommutationFailure {
                    step: steps_native + 1,
                    movement: None,
                    detail: format!("halting derivation {op:?} ended in {}", sim.render(tm)),
                });
            }
            outcome
        }
    };

    let success = failures.is_empty() && native_outcome == tc_outcome;
    Ok(EquivalenceReport {
        machine: tm.name().to_string(),
        input: tm.render_word(input),
        native_outcome,
        tc_outcome,
        steps_native,
        steps_tc,
        failures,
        success,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaltingMismatch {
    pub input: String,
    pub native: Outcome,
    pub tc: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaltingSummary {
    pub machine: String,
    pub total: usize,
    pub agreed: usize,
    pub mismatches: Vec<HaltingMismatch>,
}

impl HaltingSummary {
    pub fn holds(&self) -> bool {
        self.mismatches.is_empty() && self.agreed == self.total
    }
}

/// Independent native and stack runs per input; classifications must agree.
pub fn check_lemma2(tc: &TcMachine, inputs: &[Vec<Symbol>], budget: u64) -> Result<HaltingSummary, TuringError> {
    let tm = tc.source();
    let mut mismatches = Vec::new();
    for input in inputs {
        let native = run_tm(tm, input, budget)?;
        let sim = run_tc(tc, input, budget)?;
        let halted_ok = match sim.outcome {
            Outcome::BudgetExhausted => !sim.config.halted(),
            _ => sim.config.halted() && sim.config.state_value() < tc.sigma(),
        };
        if native.outcome != sim.outcome || !halted_ok {
            mismatches.push(HaltingMismatch { input: tm.render_word(input), native: native.outcome, tc: sim.outcome });
        }
    }
    Ok(HaltingSummary {
        machine: tm.name().to_string(),
        total: inputs.len(),
        agreed: inputs.len() - mismatches.len(),
        mismatches,
    })
}

/// Every word over the input alphabet with length `<= max_len`.
pub fn enumerate_inputs(tm: &TuringMachine, max_len: usize) -> Vec<Vec<Symbol>> {
    let alphabet = tm.input_alphabet();
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(frontier.len() * alphabet.len());
        for word in &frontier {
            for a in alphabet {
                let mut w: Vec<Symbol> = word.clone();
                w.push(*a);
                next.push(w);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turing::{construct_sama, construct_tc, fixtures};

    #[test]
    fn all_ones_commutes() {
        let tm = fixtures::all_ones();
        let tc = construct_tc(&tm, 10.0).unwrap();
        let report = check_lemma1(&tc, &tm.parse_input("11").unwrap(), 100).unwrap();
        assert!(report.success, "{report:?}");
        assert!(report.failures.is_empty());
        assert_eq!(report.steps_native, 3);
        assert_eq!(report.steps_tc, 4);
    }

    #[test]
    fn palindrome_small_inputs() {
        let tm = fixtures::palindrome();
        for tc in [construct_tc(&tm, 10.0).unwrap(), construct_sama(&tm)] {
            for w in ["", "a", "ab", "aba"] {
                let report = check_lemma1(&tc, &tm.parse_input(w).unwrap(), 1000).unwrap();
                assert!(report.success, "{w}: {report:?}");
            }
        }
    }

    #[test]
    fn corrupted_construction_fails_at_first_left_move() {
        let tm = fixtures::palindrome();
        let tc = construct_tc(&tm, 10.0).unwrap().with_left_moves_as_push();
        let input = tm.parse_input("aba").unwrap();
        let report = check_lemma1(&tc, &input, 1000).unwrap();
        assert!(!report.success);
        // Steps 1-3 are right moves; step 4 is the first left move.
        assert_eq!(report.failures[0].step, 4);
        assert_eq!(report.failures[0].movement, Some(Move::L));
    }

    #[test]
    fn enumerates_all_short_words() {
        let tm = fixtures::all_ones();
        assert_eq!(enumerate_inputs(&tm, 4).len(), 1 + 2 + 4 + 8 + 16);
        assert_eq!(enumerate_inputs(&tm, 0), vec![Vec::<Symbol>::new()]);
    }

    #[test]
    fn halting_biconditional_on_fixtures() {
        let tm = fixtures::all_ones();
        let tc = construct_tc(&tm, 10.0).unwrap();
        let s = check_lemma2(&tc, &enumerate_inputs(&tm, 4), 100).unwrap();
        assert!(s.holds());
        assert_eq!(s.total, 31);

        let looper = fixtures::looper();
        let tc = construct_tc(&looper, 10.0).unwrap();
        let inputs = enumerate_inputs(&looper, 2);
        let s = check_lemma2(&tc, &inputs, 50).unwrap();
        assert!(s.holds());
        for w in &inputs {
            assert_eq!(run_tm(&looper, w, 50).unwrap().outcome, Outcome::BudgetExhausted);
            assert_eq!(run_tc(&tc, w, 50).unwrap().outcome, Outcome::BudgetExhausted);
        }
    }

    #[test]
    fn budget_edge_agrees() {
        // "111" needs exactly 4 native steps.
        let tm = fixtures::all_ones();
        let tc = construct_tc(&tm, 10.0).unwrap();
        let w = tm.parse_input("111").unwrap();
        for budget in 1..=6 {
            let native = run_tm(&tm, &w, budget).unwrap().outcome;
            let sim = run_tc(&tc, &w, budget).unwrap().outcome;
            assert_eq!(native, sim, "budget {budget}");
            let lockstep = check_lemma1(&tc, &w, budget).unwrap();
            assert!(lockstep.success);
        }
    }
}

//! Reference machines used by the checkers and tests. Blank is `_`.

use super::machine::{MachineSpec, Move, TuringMachine};

type Row = (&'static str, &'static str, &'static str, &'static str, Move);

fn build(name: &str, states: &[&str], input: &[&str], tape: &[&str], rows: &[Row]) -> TuringMachine {
    let spec = MachineSpec {
        name: name.into(),
        states: states.iter().map(|s| s.to_string()).collect(),
        input_alphabet: input.iter().map(|s| s.to_string()).collect(),
        tape_alphabet: tape.iter().map(|s| s.to_string()).collect(),
        blank: "_".into(),
        transitions: rows
            .iter()
            .map(|(a, b, c, d, m)| (a.to_string(), b.to_string(), c.to_string(), d.to_string(), *m))
            .collect(),
        start: states[0].into(),
        accept: "acc".into(),
        reject: "rej".into(),
    };
    TuringMachine::from_spec(&spec).expect("fixture machine is well formed")
}

/// Accepts words over {0,1} containing only 1s.
pub fn all_ones() -> TuringMachine {
    use Move::*;
    build(
        "all-ones",
        &["q0", "acc", "rej"],
        &["0", "1"],
        &["_", "0", "1"],
        &[("q0", "1", "q0", "1", R), ("q0", "0", "rej", "0", R), ("q0", "_", "acc", "_", R)],
    )
}

/// Accepts palindromes over {a,b} by erasing matching end symbols.
pub fn palindrome() -> TuringMachine {
    use Move::*;
    build(
        "palindrome",
        &["q0", "seek_a", "seek_b", "check_a", "check_b", "back", "acc", "rej"],
        &["a", "b"],
        &["_", "a", "b"],
        &[
            ("q0", "_", "acc", "_", R),
            ("q0", "a", "seek_a", "_", R),
            ("q0", "b", "seek_b", "_", R),
            ("seek_a", "a", "seek_a", "a", R),
            ("seek_a", "b", "seek_a", "b", R),
            ("seek_a", "_", "check_a", "_", L),
            ("seek_b", "a", "seek_b", "a", R),
            ("seek_b", "b", "seek_b", "b", R),
            ("seek_b", "_", "check_b", "_", L),
            ("check_a", "a", "back", "_", L),
            ("check_a", "b", "rej", "b", L),
            ("check_a", "_", "acc", "_", L),
            ("check_b", "b", "back", "_", L),
            ("check_b", "a", "rej", "a", L),
            ("check_b", "_", "acc", "_", L),
            ("back", "a", "back", "a", L),
            ("back", "b", "back", "b", L),
            ("back", "_", "q0", "_", R),
        ],
    )
}

/// Prepends a 1 to a unary number by stepping off the left end.
pub fn unary_increment() -> TuringMachine {
    use Move::*;
    build(
        "unary-increment",
        &["q0", "write", "acc", "rej"],
        &["1"],
        &["_", "1"],
        &[
            ("q0", "1", "write", "1", L),
            ("q0", "_", "acc", "1", R),
            ("write", "_", "acc", "1", R),
            ("write", "1", "rej", "1", R),
        ],
    )
}

/// Balanced parentheses: mark each `)` with its nearest open `(`.
pub fn paren_matcher() -> TuringMachine {
    use Move::*;
    build(
        "paren-matcher",
        &["scan", "back", "check", "acc", "rej"],
        &["(", ")"],
        &["_", "(", ")", "X"],
        &[
            ("scan", "(", "scan", "(", R),
            ("scan", "X", "scan", "X", R),
            ("scan", ")", "back", "X", L),
            ("scan", "_", "check", "_", L),
            ("back", "X", "back", "X", L),
            ("back", "(", "scan", "X", R),
            ("back", ")", "rej", ")", R),
            ("back", "_", "rej", "_", R),
            ("check", "X", "check", "X", L),
            ("check", "(", "rej", "(", L),
            ("check", ")", "rej", ")", L),
            ("check", "_", "acc", "_", R),
        ],
    )
}

/// Runs right forever.
pub fn looper() -> TuringMachine {
    use Move::*;
    build(
        "looper",
        &["q0", "acc", "rej"],
        &["0", "1"],
        &["_", "0", "1"],
        &[("q0", "_", "q0", "_", R), ("q0", "0", "q0", "0", R), ("q0", "1", "q0", "1", R)],
    )
}

pub fn all() -> Vec<TuringMachine> {
    vec![all_ones(), palindrome(), unary_increment(), paren_matcher(), looper()]
}

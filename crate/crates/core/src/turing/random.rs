//! Seeded random machines for property runs.
//!
//! Transitions are drawn uniformly over (next state, written symbol, move),
//! with accept and reject among the possible targets. Reaching a halting
//! state is not guaranteed.

use rand::Rng;

use super::machine::{MachineSpec, Move, Symbol, TuringMachine};

/// A machine with at most `max_states` states (accept and reject included,
/// so at least one working state) and at most `max_symbols` tape symbols
/// (blank included, so at least one input symbol).
pub fn random_machine<R: Rng>(rng: &mut R, max_states: usize, max_symbols: usize) -> TuringMachine {
    assert!(max_states >= 3 && max_symbols >= 2);
    let working = rng.gen_range(1..=max_states - 2);
    let symbols = rng.gen_range(2..=max_symbols);

    let mut states: Vec<String> = (0..working).map(|i| format!("q{i}")).collect();
    states.push("acc".into());
    states.push("rej".into());
    let tape: Vec<String> = std::iter::once("_".to_string()).chain((0..symbols - 1).map(|i| i.to_string())).collect();

    let mut transitions = Vec::with_capacity(working * symbols);
    for q in &states[..working] {
        for a in &tape {
            let next = states[rng.gen_range(0..states.len())].clone();
            let write = tape[rng.gen_range(0..tape.len())].clone();
            let movement = if rng.gen_bool(0.5) { Move::L } else { Move::R };
            transitions.push((q.clone(), a.clone(), next, write, movement));
        }
    }
    TuringMachine::from_spec(&MachineSpec {
        name: String::new(),
        states: states.clone(),
        input_alphabet: tape[1..].to_vec(),
        tape_alphabet: tape,
        blank: "_".into(),
        transitions,
        start: "q0".into(),
        accept: "acc".into(),
        reject: "rej".into(),
    })
    .expect("generated machine is well formed")
}

/// Uniform-length words (0..=max_len) over the machine's input alphabet.
pub fn random_inputs<R: Rng>(rng: &mut R, tm: &TuringMachine, count: usize, max_len: usize) -> Vec<Vec<Symbol>> {
    let alphabet = tm.input_alphabet();
    (0..count)
        .map(|_| {
            let len = rng.gen_range(0..=max_len);
            (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounded_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = random_machine(&mut a, 5, 3);
            assert!(m.state_count() <= 5 && m.symbol_count() <= 3);
            assert_eq!(m, random_machine(&mut b, 5, 3));
            let words = random_inputs(&mut a, &m, 20, 6);
            assert_eq!(words, random_inputs(&mut b, &m, 20, 6));
            assert!(words.iter().all(|w| w.len() <= 6));
        }
    }
}

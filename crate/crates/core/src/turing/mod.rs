//! Reference Turing machines, the stack-machine construction that simulates
//! them, the configuration mapping between the two, and executable checks
//! that the simulation commutes step by step and preserves halting.

mod check;
pub mod fixtures;
mod machine;
mod random;
mod tc;

use thiserror::Error;

pub use check::{
    check_lemma1, check_lemma2, enumerate_inputs, CommutationFailure, EquivalenceReport, HaltingMismatch,
    HaltingSummary,
};
pub use machine::{
    run_tm, tm_step, MachineSpec, Move, Outcome, StateId, Symbol, TmConfiguration, TmRun, Transition, TuringMachine,
};
pub use random::{random_inputs, random_machine};
pub use tc::{
    construct_sama, construct_tc, map_config, run_tc, tc_step, StackOp, StateValueEntry, TcConfiguration, TcMachine,
    TcRun, TcState, ValueMode, Verdict,
};

/// Default initial state value for graded constructions.
pub const LARGE_VALUE: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuringError {
    #[error("invalid machine: {0}")]
    InvalidMachine(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("cannot step: {0}")]
    Halted(String),
}

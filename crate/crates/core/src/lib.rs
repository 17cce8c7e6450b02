pub mod engine;
pub mod harness;
pub mod memory;
pub mod monitor;
pub mod retrieval;
pub mod turing;

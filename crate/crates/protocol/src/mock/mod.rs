//! A stand-in prover speaking the same wire protocol as [`crate::client`].

pub mod evaluate;
pub mod server;

pub use evaluate::{evaluate, evaluate_theory, parse_directive, Evaluation, MockDirective};
pub use server::{serve_connection, MockConfig, MockProver, MockState, SessionRecord, Submission};

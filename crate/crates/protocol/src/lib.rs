//! Client, framing and mock server for an Isabelle-server-style prover protocol.

pub mod client;
pub mod conformance;
pub mod framing;
pub mod messages;
pub mod mock;
pub mod range;

pub use client::{ClientError, ProverAddress, ProverConnection, Secret, TaskWatch, Transport};
pub use framing::{frame_decode, frame_encode, FramingError, Reply, ReplyTag};
pub use messages::{
    MessageKind, ProgressNote, ProverMessage, ProverSessionId, SessionOptions, TaskId,
    TaskOutcome, Verdict,
};
pub use range::SourceRange;

//! Payload schemas exchanged over the wire.

use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, SystemTime};

use serde::{Deserialize, Serialize};

use crate::range::SourceRange;

/// Parent session used when none is configured.
pub const DEFAULT_PARENT_SESSION: &str = "HOL";

/// Prover default for `headless_consolidate_delay`, in seconds.
pub const PROVER_DEFAULT_CONSOLIDATE_DELAY: f64 = 15.0;

/// Recommended `headless_consolidate_delay` for interactive feedback, in seconds.
pub const FAST_CONSOLIDATE_DELAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Error,
    Warning,
    Info,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::Error => "error",
            MessageKind::Warning => "warning",
            MessageKind::Info => "info",
        })
    }
}

/// A message reported by the prover about one theory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProverMessage {
    pub kind: MessageKind,
    pub text: String,
    pub theory_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<SourceRange>,
}

/// Options for a new prover session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub consolidate_delay: Duration,
    pub parent_session: String,
}

impl SessionOptions {
    pub fn new(parent_session: impl Into<String>, consolidate_delay: Duration) -> Self {
        Self {
            consolidate_delay,
            parent_session: parent_session.into(),
        }
    }

    /// Prover options in `name=value` form.
    pub fn prover_options(&self) -> Vec<String> {
        vec![format!(
            "headless_consolidate_delay={}",
            self.consolidate_delay.as_secs_f64()
        )]
    }
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self::new(
            DEFAULT_PARENT_SESSION,
            Duration::from_secs_f64(FAST_CONSOLIDATE_DELAY),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProverSessionId(pub String);

impl fmt::Display for ProverSessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressNote {
    pub received_at: SystemTime,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Finished,
    Failed,
}

/// Everything the prover reported for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task_id: TaskId,
    pub progress: Vec<ProgressNote>,
    pub verdict: Verdict,
    pub messages: Vec<ProverMessage>,
    /// Failure reason carried by a `FAILED` verdict.
    pub failure: Option<String>,
}

impl TaskOutcome {
    pub fn errors(&self) -> impl Iterator<Item = &ProverMessage> {
        self.messages
            .iter()
            .filter(|m| m.kind == MessageKind::Error)
    }
}

// Command and reply payloads.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStartArgs {
    pub session: String,
    #[serde(default)]
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseTheoriesArgs {
    pub session_id: ProverSessionId,
    pub theories: Vec<String>,
    pub master_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurgeTheoriesArgs {
    pub session_id: ProverSessionId,
    pub theories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStopArgs {
    pub session_id: ProverSessionId,
}

/// Payload of an `OK` reply acknowledging a task-producing command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAck {
    pub task: TaskId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotePayload {
    pub task: TaskId,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<String>,
}

/// Payload of `FINISHED`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishedPayload {
    pub task: TaskId,
    #[serde(default = "default_true")]
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<ProverSessionId>,
    #[serde(default)]
    pub messages: Vec<ProverMessage>,
}

fn default_true() -> bool {
    true
}

/// Payload of `FAILED`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPayload {
    pub task: TaskId,
    pub message: String,
}

/// Payload of a command-level `ERROR`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ErrorKind>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    BadPassword,
    UnknownSession,
    UnknownCommand,
    BadArguments,
}

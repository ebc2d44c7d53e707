//! Check results and the per-user stream of check updates.

use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::diagnostic::Diagnostic;
use crate::telemetry::{Durations, Timestamp};

pub const RESULT_RETENTION: Duration = Duration::from_secs(24 * 3600);
const FEED_BUFFER: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    /// The prover finished the theories.
    Finished,
    /// The prover reported failure or could not be reached.
    Failed,
    /// Structural problems (or enforced lint errors) stopped the check.
    Rejected,
    /// Nothing changed since the last check; earlier diagnostics are reused.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub activity: String,
    pub status: CheckStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub durations: Option<Durations>,
    /// Theories actually sent to the prover.
    pub checked: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub completed: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CheckUpdate {
    Progress {
        seq: u64,
        check_id: String,
        text: String,
    },
    Final {
        seq: u64,
        result: CheckResult,
    },
}

impl CheckUpdate {
    pub fn seq(&self) -> u64 {
        match self {
            Self::Progress { seq, .. } | Self::Final { seq, .. } => *seq,
        }
    }

    pub fn check_id(&self) -> &str {
        match self {
            Self::Progress { check_id, .. } => check_id,
            Self::Final { result, .. } => &result.check_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum CheckState {
    Pending,
    Done { result: CheckResult },
}

struct Entry {
    user: String,
    created: Instant,
    state: CheckState,
}

struct UserFeed {
    next_seq: u64,
    buffer: VecDeque<CheckUpdate>,
    tx: broadcast::Sender<CheckUpdate>,
}

impl UserFeed {
    fn new() -> Self {
        Self {
            next_seq: 1,
            buffer: VecDeque::new(),
            tx: broadcast::channel(FEED_BUFFER).0,
        }
    }
}

#[derive(Default)]
pub struct Feeds {
    feeds: Mutex<HashMap<String, UserFeed>>,
    checks: Mutex<HashMap<String, Entry>>,
}

impl Feeds {
    pub fn register(&self, user: &str, check_id: &str) {
        let mut checks = self.checks.lock();
        checks.retain(|_, e| e.created.elapsed() < RESULT_RETENTION);
        checks.insert(
            check_id.to_owned(),
            Entry {
                user: user.to_owned(),
                created: Instant::now(),
                state: CheckState::Pending,
            },
        );
    }

    /// The state of a check, if it belongs to `user`.
    pub fn check(&self, user: &str, check_id: &str) -> Option<CheckState> {
        self.checks
            .lock()
            .get(check_id)
            .filter(|e| e.user == user && e.created.elapsed() < RESULT_RETENTION)
            .map(|e| e.state.clone())
    }

    pub fn owner(&self, check_id: &str) -> Option<String> {
        self.checks.lock().get(check_id).map(|e| e.user.clone())
    }

    fn publish(&self, user: &str, make: impl FnOnce(u64) -> CheckUpdate) {
        let mut feeds = self.feeds.lock();
        let feed = feeds.entry(user.to_owned()).or_insert_with(UserFeed::new);
        let update = make(feed.next_seq);
        feed.next_seq += 1;
        if feed.buffer.len() == FEED_BUFFER {
            feed.buffer.pop_front();
        }
        feed.buffer.push_back(update.clone());
        let _ = feed.tx.send(update);
    }

    pub fn progress(&self, user: &str, check_id: &str, text: &str) {
        self.publish(user, |seq| CheckUpdate::Progress {
            seq,
            check_id: check_id.to_owned(),
            text: text.to_owned(),
        });
    }

    /// Stores the result for re-fetching, then pushes it.
    pub fn finish(&self, user: &str, result: CheckResult) {
        if let Some(e) = self.checks.lock().get_mut(&result.check_id) {
            e.state = CheckState::Done {
                result: result.clone(),
            };
        }
        self.publish(user, |seq| CheckUpdate::Final { seq, result });
    }

    /// Buffered updates with a sequence number above `after`.
    pub fn updates_after(&self, user: &str, after: u64) -> Vec<CheckUpdate> {
        self.feeds
            .lock()
            .get(user)
            .map(|f| f.buffer.iter().filter(|u| u.seq() > after).cloned().collect())
            .unwrap_or_default()
    }

    /// Live updates from now on.
    pub fn subscribe(&self, user: &str) -> broadcast::Receiver<CheckUpdate> {
        self.feeds
            .lock()
            .entry(user.to_owned())
            .or_insert_with(UserFeed::new)
            .tx
            .subscribe()
    }

    /// Updates after `after`, waiting up to `wait` for the first one.
    pub async fn poll(&self, user: &str, after: u64, wait: Duration) -> Vec<CheckUpdate> {
        let mut rx = self.subscribe(user);
        let ready = self.updates_after(user, after);
        if !ready.is_empty() {
            return ready;
        }
        let deadline = tokio::time::Instant::now() + wait;
        loop {
            match tokio::time::timeout_at(deadline, rx.recv()).await {
                Err(_) => return Vec::new(),
                Ok(Ok(u)) if u.seq() > after => return self.updates_after(user, after),
                Ok(Ok(_)) => continue,
                Ok(Err(broadcast::error::RecvError::Lagged(_))) => {
                    return self.updates_after(user, after)
                }
                Ok(Err(broadcast::error::RecvError::Closed)) => return Vec::new(),
            }
        }
    }
}

//! Operational metrics: request and check timings, active users, memory.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use proofdesk_core::telemetry::{Durations, Timestamp};
use serde::{Deserialize, Serialize};

const MEMORY_SAMPLES: usize = 360;
const RECENT_CHECKS: usize = 100;
pub const ACTIVE_WINDOW: Duration = Duration::from_secs(5 * 60);

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: u64,
    pub p95_ms: u64,
    pub max_ms: u64,
}

impl Summary {
    pub fn of(values: &[u64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let rank = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
        Self {
            count: sorted.len(),
            mean_ms: sorted.iter().sum::<u64>() as f64 / sorted.len() as f64,
            p50_ms: rank(0.5),
            p95_ms: rank(0.95),
            max_ms: *sorted.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySample {
    pub at: Timestamp,
    pub rss_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckTimings {
    /// Time spent in the server itself, prover wait excluded.
    pub server_handling: Summary,
    pub prover_wait: Summary,
    /// The most recent checks, oldest first.
    pub recent: Vec<Durations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMetrics {
    pub uptime_ms: u64,
    /// Handling time of every HTTP request.
    pub requests: Summary,
    pub checks: CheckTimings,
    /// Distinct users seen in the last five minutes.
    pub active_users: usize,
    pub live_prover_sessions: usize,
    pub memory: Vec<MemorySample>,
}

pub struct Metrics {
    started: Instant,
    requests: Mutex<VecDeque<u64>>,
    memory: Mutex<VecDeque<MemorySample>>,
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            started: Instant::now(),
            requests: Mutex::new(VecDeque::new()),
            memory: Mutex::new(VecDeque::new()),
        }
    }
}

impl Metrics {
    pub fn record_request(&self, elapsed: Duration) {
        let mut r = self.requests.lock();
        if r.len() == 4096 {
            r.pop_front();
        }
        r.push_back(elapsed.as_millis() as u64);
    }

    pub fn sample_memory(&self) {
        if let Some(rss_bytes) = resident_bytes() {
            let mut m = self.memory.lock();
            if m.len() == MEMORY_SAMPLES {
                m.pop_front();
            }
            m.push_back(MemorySample {
                at: Timestamp::now(),
                rss_bytes,
            });
        }
    }

    pub fn snapshot(
        &self,
        checks: &[Durations],
        active_users: usize,
        live_prover_sessions: usize,
    ) -> ServerMetrics {
        self.sample_memory();
        let requests: Vec<u64> = self.requests.lock().iter().copied().collect();
        let handling: Vec<u64> = checks.iter().map(|d| d.server_handling_ms).collect();
        let prover: Vec<u64> = checks.iter().map(|d| d.prover_ms).collect();
        ServerMetrics {
            uptime_ms: self.started.elapsed().as_millis() as u64,
            requests: Summary::of(&requests),
            checks: CheckTimings {
                server_handling: Summary::of(&handling),
                prover_wait: Summary::of(&prover),
                recent: checks[checks.len().saturating_sub(RECENT_CHECKS)..].to_vec(),
            },
            active_users,
            live_prover_sessions,
            memory: self.memory.lock().iter().copied().collect(),
        }
    }
}

/// Resident set size from `/proc/self/status`; `None` where unavailable.
pub fn resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

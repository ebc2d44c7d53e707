//! The shared prover connection and the per-user prover sessions on it.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use proofdesk_protocol::{ClientError, ProverAddress, ProverConnection, ProverSessionId, SessionOptions};

struct UserSession {
    id: ProverSessionId,
    generation: u64,
    last_used: Instant,
}

pub struct ProverPool {
    address: Option<ProverAddress>,
    options: SessionOptions,
    task_timeout: Duration,
    conn: tokio::sync::Mutex<Option<(ProverConnection, u64)>>,
    generation: Mutex<u64>,
    sessions: Mutex<HashMap<String, UserSession>>,
}

impl ProverPool {
    /// `address == None` means no prover is configured; every check then
    /// fails as prover-unavailable.
    pub fn new(address: Option<ProverAddress>, options: SessionOptions, task_timeout: Duration) -> Self {
        Self {
            address,
            options,
            task_timeout,
            conn: tokio::sync::Mutex::new(None),
            generation: Mutex::new(0),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn task_timeout(&self) -> Duration {
        self.task_timeout
    }

    /// The live connection, reconnecting if the previous one dropped.
    pub async fn connection(&self) -> Result<(ProverConnection, u64), ClientError> {
        let mut slot = self.conn.lock().await;
        if let Some((conn, generation)) = slot.as_ref() {
            if !conn.is_closed() {
                return Ok((conn.clone(), *generation));
            }
        }
        let address = self
            .address
            .as_ref()
            .ok_or_else(|| ClientError::ConnectionRefused("no prover configured".into()))?;
        let conn = ProverConnection::connect(address)
            .await?
            .with_task_timeout(self.task_timeout);
        let generation = {
            let mut g = self.generation.lock();
            *g += 1;
            *g
        };
        // Sessions belong to the old connection's prover.
        self.sessions.lock().retain(|_, s| s.generation == generation);
        *slot = Some((conn.clone(), generation));
        Ok((conn, generation))
    }

    /// The user's prover session, created on first use. Callers serialize
    /// per user, so two sessions are never started for one user at once.
    pub async fn session_for(
        &self,
        user: &str,
    ) -> Result<(ProverConnection, ProverSessionId), ClientError> {
        let (conn, generation) = self.connection().await?;
        {
            let mut sessions = self.sessions.lock();
            if let Some(s) = sessions.get_mut(user) {
                if s.generation == generation {
                    s.last_used = Instant::now();
                    return Ok((conn, s.id.clone()));
                }
            }
        }
        let id = conn.session_start(&self.options).await?;
        self.sessions.lock().insert(
            user.to_owned(),
            UserSession {
                id: id.clone(),
                generation,
                last_used: Instant::now(),
            },
        );
        Ok((conn, id))
    }

    pub fn touch(&self, user: &str) {
        if let Some(s) = self.sessions.lock().get_mut(user) {
            s.last_used = Instant::now();
        }
    }

    /// Drops a session the prover no longer knows.
    pub fn forget(&self, user: &str) {
        self.sessions.lock().remove(user);
    }

    pub fn session_of(&self, user: &str) -> Option<ProverSessionId> {
        self.sessions.lock().get(user).map(|s| s.id.clone())
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().len()
    }

    /// Stops sessions idle for longer than `idle`. Returns how many.
    pub async fn reap_idle(&self, idle: Duration) -> usize {
        let stale: Vec<(String, ProverSessionId)> = {
            let mut sessions = self.sessions.lock();
            let users: Vec<String> = sessions
                .iter()
                .filter(|(_, s)| s.last_used.elapsed() >= idle)
                .map(|(u, _)| u.clone())
                .collect();
            users
                .into_iter()
                .filter_map(|u| sessions.remove(&u).map(|s| (u, s.id)))
                .collect()
        };
        if stale.is_empty() {
            return 0;
        }
        let conn = self.conn.lock().await.as_ref().map(|(c, _)| c.clone());
        if let Some(conn) = conn {
            for (user, id) in &stale {
                if let Err(e) = conn.session_stop(id).await {
                    tracing::debug!(user, error = %e, "stopping idle prover session");
                }
            }
        }
        stale.len()
    }
}

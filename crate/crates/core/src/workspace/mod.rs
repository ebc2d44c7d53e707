//! Users, their theories, and check orchestration.
//!
//! On-disk layout under the data directory:
//!
//! ```text
//! workspace.sqlite3               users, documents, version chain
//! blobs/                          theory contents by SHA-256
//! events.jsonl                    telemetry log
//! prover/<user>/<activity>/*.thy  files materialized for the prover
//! ```
//!
//! Activity configurations are read from `<config-dir>/activities/*.toml`
//! and users from `<config-dir>/users.toml`.

mod accounts;
mod archive;
mod feed;
mod prover;
mod store;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Weak};
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use proofdesk_protocol::{ClientError, ProverAddress, SessionOptions, Verdict};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

pub use accounts::{hash_password, load_users_file, Accounts, Role, User, UserEntry};
pub use feed::{CheckResult, CheckState, CheckStatus, CheckUpdate, Feeds, RESULT_RETENTION};
pub use prover::ProverPool;
pub use store::{content_hash, DocStore, DocumentSummary, StoreError, TheoryDocument, VersionInfo};

use crate::activity::{load_activities, ActivityConfig};
use crate::analytics::Analyzer;
use crate::diagnostic::Diagnostic;
use crate::isar::{check_structure, tokenize, Token, TokenClass};
use crate::lint::{compile_ruleset, lint_tokens};
use crate::names::is_valid_theory_name;
use crate::telemetry::{
    Durations, EventFilter, EventKind, NewEvent, StoreOptions, TelemetryError, TelemetryStore,
    Timestamp,
};

pub const DEFAULT_SESSION_IDLE: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("bad credentials")]
    BadCredentials,
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid name: {0}")]
    NameInvalid(String),
    #[error("quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("unknown activity {0:?}")]
    UnknownActivity(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct WorkspaceConfig {
    pub data_dir: PathBuf,
    pub config_dir: Option<PathBuf>,
    /// `None` runs without a prover; checks then fail as prover-unavailable.
    pub prover: Option<ProverAddress>,
    pub session_options: SessionOptions,
    pub task_timeout: Duration,
    pub session_idle: Duration,
    pub max_theory_bytes: usize,
    pub max_user_bytes: u64,
    pub telemetry_max_bytes: Option<u64>,
}

impl WorkspaceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            config_dir: None,
            prover: None,
            session_options: SessionOptions::default(),
            task_timeout: proofdesk_protocol::client::DEFAULT_TASK_TIMEOUT,
            session_idle: DEFAULT_SESSION_IDLE,
            max_theory_bytes: 1 << 20,
            max_user_bytes: 50 << 20,
            telemetry_max_bytes: None,
        }
    }
}

/// Documents split by whether their content changed since the last check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckPlan {
    pub to_check: Vec<TheoryDocument>,
    pub skipped: Vec<TheoryDocument>,
}

pub fn plan_check(requested: &[TheoryDocument]) -> CheckPlan {
    let (to_check, skipped) = requested.iter().cloned().partition(|d| d.is_dirty());
    CheckPlan { to_check, skipped }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckOptions {
    /// The student switched the linter off (honoured only where allowed).
    #[serde(default)]
    pub linter_disabled: bool,
}

struct Job {
    user: String,
    activity: String,
    check_id: String,
    docs: Vec<TheoryDocument>,
    options: CheckOptions,
    submit_time: Duration,
}

struct Inner {
    config: WorkspaceConfig,
    store: Arc<DocStore>,
    accounts: Accounts,
    telemetry: Arc<TelemetryStore>,
    prover: ProverPool,
    feeds: Feeds,
    activities: RwLock<BTreeMap<String, ActivityConfig>>,
    workers: Mutex<HashMap<String, mpsc::UnboundedSender<Job>>>,
    timings: Mutex<VecDeque<Durations>>,
    prover_submissions: AtomicU64,
}

/// Cheap to clone; all clones share state.
#[derive(Clone)]
pub struct Workspace {
    inner: Arc<Inner>,
}

const TIMING_WINDOW: usize = 4096;

impl Workspace {
    /// Opens the stores and loads configuration. Must run inside a Tokio
    /// runtime; it starts the idle-session reaper.
    pub fn open(config: WorkspaceConfig) -> Result<Self, WorkspaceError> {
        std::fs::create_dir_all(&config.data_dir)?;
        let store = Arc::new(DocStore::open(&config.data_dir)?);
        let telemetry = Arc::new(TelemetryStore::open_with(
            config.data_dir.join("events.jsonl"),
            StoreOptions {
                max_bytes: config.telemetry_max_bytes,
            },
        )?);
        let (users, activities) = match &config.config_dir {
            Some(dir) => (
                load_users_file(&dir.join("users.toml"))?,
                load_activities(&dir.join("activities"))
                    .map_err(|e| WorkspaceError::Config(e.to_string()))?,
            ),
            None => (Vec::new(), Vec::new()),
        };
        let mut by_id = BTreeMap::new();
        let demo = crate::activity::demo_activity();
        by_id.insert(demo.id.clone(), demo);
        for a in activities {
            by_id.insert(a.id.clone(), a);
        }
        let accounts = Accounts::new(store.clone(), users)?;
        let prover = ProverPool::new(
            config.prover.clone(),
            config.session_options.clone(),
            config.task_timeout,
        );
        let inner = Arc::new(Inner {
            config,
            store,
            accounts,
            telemetry,
            prover,
            feeds: Feeds::default(),
            activities: RwLock::new(by_id),
            workers: Mutex::new(HashMap::new()),
            timings: Mutex::new(VecDeque::new()),
            prover_submissions: AtomicU64::new(0),
        });
        spawn_reaper(Arc::downgrade(&inner), inner.config.session_idle);
        Ok(Self { inner })
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.inner.config
    }

    pub fn accounts(&self) -> &Accounts {
        &self.inner.accounts
    }

    pub fn telemetry(&self) -> &Arc<TelemetryStore> {
        &self.inner.telemetry
    }

    pub fn feeds(&self) -> &Feeds {
        &self.inner.feeds
    }

    pub fn prover(&self) -> &ProverPool {
        &self.inner.prover
    }

    /// Number of `use_theories` calls issued so far.
    pub fn prover_submissions(&self) -> u64 {
        self.inner.prover_submissions.load(Ordering::Relaxed)
    }

    /// Recent per-check durations, oldest first.
    pub fn check_timings(&self) -> Vec<Durations> {
        self.inner.timings.lock().iter().copied().collect()
    }

    // Activities

    pub fn activities(&self) -> Vec<ActivityConfig> {
        self.inner.activities.read().values().cloned().collect()
    }

    pub fn activity(&self, id: &str) -> Result<ActivityConfig, WorkspaceError> {
        self.inner
            .activities
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| WorkspaceError::UnknownActivity(id.to_owned()))
    }

    /// Creates or replaces an activity. Persisted to the config directory
    /// when one is configured.
    pub fn put_activity(&self, by: &User, config: ActivityConfig) -> Result<(), WorkspaceError> {
        if !by.is_instructor() {
            return Err(WorkspaceError::PermissionDenied(
                "only instructors configure activities".into(),
            ));
        }
        config
            .validate()
            .map_err(|e| WorkspaceError::Config(e.to_string()))?;
        if let Some(dir) = &self.inner.config.config_dir {
            let dir = dir.join("activities");
            std::fs::create_dir_all(&dir)?;
            write_atomic(&dir.join(format!("{}.toml", config.id)), config.to_toml().as_bytes())?;
        }
        self.inner
            .activities
            .write()
            .insert(config.id.clone(), config);
        Ok(())
    }

    /// The same analyzer `analyze --config <config_dir>` builds, over the
    /// activities currently loaded.
    pub fn analyzer(&self) -> Result<Analyzer, WorkspaceError> {
        let base = Analyzer::from_config_dir(self.inner.config.config_dir.as_deref())
            .map_err(|e| WorkspaceError::Config(e.to_string()))?;
        Ok(Analyzer {
            activities: self.activities(),
            ..base
        })
    }

    // Theories

    pub fn save_theory(
        &self,
        user: &User,
        activity: &str,
        name: &str,
        content: &str,
    ) -> Result<TheoryDocument, WorkspaceError> {
        self.activity(activity)?;
        validate_theory_name(name, content)?;
        let max = self.inner.config.max_theory_bytes;
        if content.len() > max {
            return Err(WorkspaceError::QuotaExceeded(format!(
                "theory is {} bytes, the limit is {max}",
                content.len()
            )));
        }
        let store = &self.inner.store;
        let previous = store
            .load(&user.id, activity, name)?
            .map_or(0, |d| d.content.len() as u64);
        let total = store.total_size(&user.id)? - previous + content.len() as u64;
        if total > self.inner.config.max_user_bytes {
            return Err(WorkspaceError::QuotaExceeded(format!(
                "stored theories would take {total} bytes, the limit is {}",
                self.inner.config.max_user_bytes
            )));
        }
        Ok(store.save(&user.id, activity, name, content, Timestamp::now())?)
    }

    /// Loads `owner`'s theory on behalf of `requester`. Instructors may read
    /// anyone's theories; everyone else only their own.
    pub fn load_theory_of(
        &self,
        requester: &User,
        owner: &str,
        activity: &str,
        name: &str,
    ) -> Result<TheoryDocument, WorkspaceError> {
        if requester.id != owner && !requester.is_instructor() {
            return Err(WorkspaceError::PermissionDenied(
                "theories of other users are private".into(),
            ));
        }
        self.inner
            .store
            .load(owner, activity, name)?
            .ok_or_else(|| WorkspaceError::NotFound(format!("{activity}/{name}")))
    }

    pub fn load_theory(
        &self,
        user: &User,
        activity: &str,
        name: &str,
    ) -> Result<TheoryDocument, WorkspaceError> {
        self.load_theory_of(user, &user.id, activity, name)
    }

    pub fn delete_theory(&self, user: &User, activity: &str, name: &str) -> Result<(), WorkspaceError> {
        if self.inner.store.delete(&user.id, activity, name)? {
            Ok(())
        } else {
            Err(WorkspaceError::NotFound(format!("{activity}/{name}")))
        }
    }

    pub fn list_theories(
        &self,
        user: &User,
        activity: Option<&str>,
    ) -> Result<Vec<DocumentSummary>, WorkspaceError> {
        Ok(self.inner.store.list(&user.id, activity)?)
    }

    /// Lists `owner`'s theories; like [`Self::load_theory_of`], only
    /// instructors may look at other users.
    pub fn list_theories_of(
        &self,
        requester: &User,
        owner: &str,
        activity: Option<&str>,
    ) -> Result<Vec<DocumentSummary>, WorkspaceError> {
        if requester.id != owner && !requester.is_instructor() {
            return Err(WorkspaceError::PermissionDenied(
                "theories of other users are private".into(),
            ));
        }
        Ok(self.inner.store.list(owner, activity)?)
    }

    pub fn theory_versions(
        &self,
        user: &User,
        activity: &str,
        name: &str,
    ) -> Result<Vec<VersionInfo>, WorkspaceError> {
        Ok(self.inner.store.versions(&user.id, activity, name)?)
    }

    pub fn export_archive(&self, user: &User, activity: Option<&str>) -> Result<Vec<u8>, WorkspaceError> {
        let mut docs = Vec::new();
        for s in self.inner.store.list(&user.id, activity)? {
            if let Some(d) = self.inner.store.load(&user.id, &s.activity, &s.name)? {
                docs.push(d);
            }
        }
        archive::write(&docs)
    }

    pub fn import_archive(&self, user: &User, bytes: &[u8]) -> Result<Vec<TheoryDocument>, WorkspaceError> {
        let entries = archive::read(bytes)?;
        for (activity, name, content) in &entries {
            self.activity(activity)?;
            validate_theory_name(name, content)?;
        }
        entries
            .iter()
            .map(|(activity, name, content)| self.save_theory(user, activity, name, content))
            .collect()
    }

    // Checking

    /// Structure and lint diagnostics for a text, without saving or checking it.
    pub fn lint_text(
        &self,
        activity: &str,
        content: &str,
        options: &CheckOptions,
    ) -> Result<Vec<Diagnostic>, WorkspaceError> {
        let config = self.activity(activity)?;
        let tokens = tokenize(content);
        let mut out: Vec<Diagnostic> = check_structure(&tokens)
            .iter()
            .map(|d| Diagnostic::from_structure(d, None))
            .collect();
        let ruleset = compile_ruleset(&config).map_err(|e| WorkspaceError::Config(e.to_string()))?;
        if ruleset.applies(options.linter_disabled) {
            out.extend(lint_tokens(&tokens, &ruleset));
        }
        Ok(out)
    }

    /// Records the submission with a full snapshot, queues the check behind
    /// the user's earlier ones, and returns its id. Results arrive on the
    /// user's feed and stay fetchable by id.
    pub fn submit_check(
        &self,
        user: &User,
        activity: &str,
        names: &[String],
        options: CheckOptions,
    ) -> Result<String, WorkspaceError> {
        let started = Instant::now();
        if names.is_empty() {
            return Err(WorkspaceError::NotFound("no theories requested".into()));
        }
        self.activity(activity)?;
        let mut docs = Vec::with_capacity(names.len());
        for name in names {
            if docs.iter().any(|d: &TheoryDocument| &d.name == name) {
                continue;
            }
            docs.push(self.load_theory(user, activity, name)?);
        }
        let check_id = uuid::Uuid::new_v4().to_string();
        let mut event = NewEvent::new(&user.id, activity, EventKind::CheckSubmitted).check_id(&check_id);
        for d in &docs {
            event = event.snapshot(&d.name, &d.content);
        }
        self.inner.telemetry.record_event(event)?;
        self.inner.feeds.register(&user.id, &check_id);
        self.enqueue(Job {
            user: user.id.clone(),
            activity: activity.to_owned(),
            check_id: check_id.clone(),
            docs,
            options,
            submit_time: started.elapsed(),
        });
        Ok(check_id)
    }

    pub fn check_state(&self, user: &User, check_id: &str) -> Option<CheckState> {
        self.inner.feeds.check(&user.id, check_id)
    }

    /// Waits until the check has a result (for tests and tooling).
    pub async fn wait_for_result(&self, user: &User, check_id: &str, timeout: Duration) -> Option<CheckResult> {
        let deadline = Instant::now() + timeout;
        let mut rx = self.inner.feeds.subscribe(&user.id);
        loop {
            match self.check_state(user, check_id)? {
                CheckState::Done { result } => return Some(result),
                CheckState::Pending => {}
            }
            let left = deadline.checked_duration_since(Instant::now())?;
            let _ = tokio::time::timeout(left, rx.recv()).await;
        }
    }

    /// Appends an export produced by another store. Instructors only.
    pub fn import_events<R: std::io::BufRead>(&self, requester: &User, input: R) -> Result<usize, WorkspaceError> {
        if !requester.is_instructor() {
            return Err(WorkspaceError::PermissionDenied(
                "only instructors import telemetry".into(),
            ));
        }
        Ok(self.inner.telemetry.import(input)?)
    }

    pub fn export_events<W: std::io::Write>(
        &self,
        requester: &User,
        filter: &EventFilter,
        out: W,
    ) -> Result<usize, WorkspaceError> {
        if !requester.is_instructor() {
            return Err(WorkspaceError::PermissionDenied(
                "only instructors export telemetry".into(),
            ));
        }
        Ok(self.inner.telemetry.export(filter, out)?)
    }

    fn enqueue(&self, job: Job) {
        let mut workers = self.inner.workers.lock();
        let tx = workers.entry(job.user.clone()).or_insert_with(|| {
            let (tx, mut rx) = mpsc::unbounded_channel::<Job>();
            let inner = self.inner.clone();
            tokio::spawn(async move {
                while let Some(job) = rx.recv().await {
                    run_check(&inner, job).await;
                }
            });
            tx
        });
        if let Err(mpsc::error::SendError(job)) = tx.send(job) {
            // Only if the worker task panicked; restart it.
            workers.remove(&job.user);
            drop(workers);
            self.enqueue(job);
        }
    }
}

fn spawn_reaper(inner: Weak<Inner>, idle: Duration) {
    let Ok(handle) = tokio::runtime::Handle::try_current() else {
        return;
    };
    let period = (idle / 4).clamp(Duration::from_millis(50), Duration::from_secs(60));
    handle.spawn(async move {
        let mut tick = tokio::time::interval(period);
        tick.tick().await;
        loop {
            tick.tick().await;
            let Some(inner) = inner.upgrade() else { break };
            let reaped = inner.prover.reap_idle(idle).await;
            if reaped > 0 {
                tracing::info!(reaped, "stopped idle prover sessions");
            }
        }
    });
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)
}

/// The theory name stated in the header, if there is one.
pub fn header_name(tokens: &[Token]) -> Option<String> {
    let mut significant = tokens.iter().filter(|t| !t.is_trivia());
    if !significant.next()?.is_command("theory") {
        return None;
    }
    let name = significant.next()?;
    match name.class {
        TokenClass::Identifier => Some(name.text.clone()),
        TokenClass::StringLiteral => Some(name.text.trim_matches('"').to_owned()),
        _ => None,
    }
}

fn validate_theory_name(name: &str, content: &str) -> Result<(), WorkspaceError> {
    if !is_valid_theory_name(name) {
        return Err(WorkspaceError::NameInvalid(format!("{name:?} is not a theory name")));
    }
    match header_name(&tokenize(content)) {
        Some(stated) if stated != name => Err(WorkspaceError::NameInvalid(format!(
            "the header names theory {stated:?}, the file is {name:?}"
        ))),
        _ => Ok(()),
    }
}

fn with_theory(mut diagnostics: Vec<Diagnostic>, theory: &str) -> Vec<Diagnostic> {
    for d in &mut diagnostics {
        d.theory.get_or_insert_with(|| theory.to_owned());
    }
    diagnostics
}

struct ProverRun {
    outcome: proofdesk_protocol::TaskOutcome,
    wait: Duration,
}

async fn run_check(inner: &Arc<Inner>, job: Job) {
    let started = Instant::now();
    let telemetry = &inner.telemetry;
    let record = |event: NewEvent| {
        if let Err(e) = telemetry.record_event(event) {
            tracing::error!(error = %e, "telemetry write failed");
        }
    };
    let event = |kind| NewEvent::new(&job.user, &job.activity, kind).check_id(&job.check_id);

    let config = inner.activities.read().get(&job.activity).cloned();
    let ruleset = config
        .as_ref()
        .and_then(|c| compile_ruleset(c).ok())
        .unwrap_or_default();

    let mut structure = Vec::new();
    let mut lint = Vec::new();
    for doc in &job.docs {
        let tokens = tokenize(&doc.content);
        structure.extend(
            check_structure(&tokens)
                .iter()
                .map(|d| Diagnostic::from_structure(d, Some(&doc.name))),
        );
        if ruleset.applies(job.options.linter_disabled) {
            lint.extend(with_theory(lint_tokens(&tokens, &ruleset), &doc.name));
        }
    }
    if !lint.is_empty() {
        record(event(EventKind::LintShown).diagnostics(lint.clone()));
    }

    let measure = |prover_wait: Duration| {
        let handling = job.submit_time + started.elapsed().saturating_sub(prover_wait);
        let durations = Durations {
            server_handling_ms: handling.as_millis() as u64,
            prover_ms: prover_wait.as_millis() as u64,
        };
        let mut timings = inner.timings.lock();
        if timings.len() == TIMING_WINDOW {
            timings.pop_front();
        }
        timings.push_back(durations);
        durations
    };
    // Telemetry is written before the result is published, so anyone who
    // sees the result also finds its event.
    let publish = |status, diagnostics, durations, checked, message: Option<String>| {
        inner.feeds.finish(
            &job.user,
            CheckResult {
                check_id: job.check_id.clone(),
                activity: job.activity.clone(),
                status,
                diagnostics,
                durations: Some(durations),
                checked,
                message,
                completed: Timestamp::now(),
            },
        );
    };

    if !structure.is_empty() {
        let durations = measure(Duration::ZERO);
        record(event(EventKind::StructureRejected).diagnostics(structure.clone()).durations(durations));
        let mut shown = structure;
        shown.extend(lint);
        publish(
            CheckStatus::Rejected,
            shown,
            durations,
            Vec::new(),
            Some("structural errors; the prover was not called".into()),
        );
        return;
    }
    if ruleset.blocks(&lint) {
        let message = "error-level lint findings must be fixed before checking";
        let durations = measure(Duration::ZERO);
        record(event(EventKind::ResultReceived).durations(durations).failure(message));
        publish(CheckStatus::Rejected, lint, durations, Vec::new(), Some(message.into()));
        return;
    }

    let plan = plan_check(&job.docs);
    let reused = |docs: &[TheoryDocument]| -> Vec<Diagnostic> {
        docs.iter()
            .flat_map(|d| {
                inner
                    .store
                    .last_diagnostics(&job.user, &job.activity, &d.name)
                    .unwrap_or_default()
            })
            .collect()
    };

    if plan.to_check.is_empty() {
        let previous = reused(&plan.skipped);
        let durations = measure(Duration::ZERO);
        record(event(EventKind::ResultReceived).diagnostics(previous.clone()).durations(durations));
        let mut shown = lint;
        shown.extend(previous);
        publish(CheckStatus::Unchanged, shown, durations, Vec::new(), Some("no changes".into()));
        return;
    }

    let names: Vec<String> = plan.to_check.iter().map(|d| d.name.clone()).collect();
    match prover_round_trip(inner, &job, &names).await {
        Ok(run) => {
            let fresh: Vec<Diagnostic> = run.outcome.messages.iter().map(Diagnostic::from_prover).collect();
            let ok = run.outcome.verdict == Verdict::Finished;
            if ok {
                for doc in &plan.to_check {
                    let own: Vec<Diagnostic> = fresh
                        .iter()
                        .filter(|d| d.theory.as_deref() == Some(doc.name.as_str()))
                        .cloned()
                        .collect();
                    if let Err(e) = inner.store.mark_checked(&job.user, &job.activity, &doc.name, &doc.content_hash, &own) {
                        tracing::error!(error = %e, "recording checked hash");
                    }
                }
            }
            let mut prover_diags = fresh;
            prover_diags.extend(reused(&plan.skipped));
            let durations = measure(run.wait);
            let mut e = event(EventKind::ResultReceived).diagnostics(prover_diags.clone()).durations(durations);
            if let Some(f) = &run.outcome.failure {
                e = e.failure(f.clone());
            }
            record(e);
            let mut shown = lint;
            shown.extend(prover_diags);
            let status = if ok { CheckStatus::Finished } else { CheckStatus::Failed };
            publish(status, shown, durations, names, run.outcome.failure);
        }
        Err((error, wait)) => {
            let message = format!("prover unavailable: {error}");
            tracing::warn!(user = %job.user, %message);
            let durations = measure(wait);
            record(event(EventKind::ResultReceived).durations(durations).failure(message.clone()));
            publish(CheckStatus::Failed, lint, durations, Vec::new(), Some(message));
        }
    }
}

async fn prover_round_trip(
    inner: &Arc<Inner>,
    job: &Job,
    names: &[String],
) -> Result<ProverRun, (ClientError, Duration)> {
    let master = inner
        .config
        .data_dir
        .join("prover")
        .join(&job.user)
        .join(&job.activity);
    let write = || -> std::io::Result<()> {
        std::fs::create_dir_all(&master)?;
        for doc in &job.docs {
            write_atomic(&master.join(format!("{}.thy", doc.name)), doc.content.as_bytes())?;
        }
        Ok(())
    };
    if let Err(e) = write() {
        return Err((ClientError::Io(e), Duration::ZERO));
    }
    let t0 = Instant::now();
    let fail = |e| Err((e, t0.elapsed()));
    let mut attempt = 0;
    let (conn, task) = loop {
        attempt += 1;
        let (conn, session) = match inner.prover.session_for(&job.user).await {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match conn.use_theories(&session, names, &master).await {
            Ok(task) => break (conn, task),
            Err(ClientError::UnknownSession(_)) if attempt == 1 => inner.prover.forget(&job.user),
            Err(e) => return fail(e),
        }
    };
    inner.prover_submissions.fetch_add(1, Ordering::Relaxed);
    let forward = match conn.watch_task(&task) {
        Ok(mut watch) => {
            let inner = inner.clone();
            let (user, check_id) = (job.user.clone(), job.check_id.clone());
            Some(tokio::spawn(async move {
                let mut sent = 0;
                loop {
                    let notes = watch.progress();
                    for note in &notes[sent.min(notes.len())..] {
                        inner.feeds.progress(&user, &check_id, &note.text);
                    }
                    sent = notes.len();
                    if watch.is_done() || !watch.changed().await {
                        break;
                    }
                }
            }))
        }
        Err(_) => None,
    };
    let outcome = conn.await_task(&task, inner.prover.task_timeout()).await;
    let wait = t0.elapsed();
    if let Some(forward) = forward {
        let _ = forward.await;
    }
    inner.prover.touch(&job.user);
    match outcome {
        Ok(outcome) => Ok(ProverRun { outcome, wait }),
        Err(e) => Err((e, wait)),
    }
}

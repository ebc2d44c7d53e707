//! Append-only check-event log backed by a line-delimited JSON file.
//!
//! Every append is written and fsynced before `record_event` returns. Writers
//! are serialized by one mutex; readers work on an in-memory index that only
//! ever grows, so a query sees a consistent prefix of the log.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diagnostic::Diagnostic;

pub const EXPORT_SCHEMA: &str = "proofdesk.check-event";
pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    CheckSubmitted,
    ResultReceived,
    LintShown,
    StructureRejected,
    /// Reserved for editor-level capture; nothing emits it by default.
    Keystroke,
}

impl std::str::FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| format!("unknown event kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheorySnapshot {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Durations {
    pub server_handling_ms: u64,
    pub prover_ms: u64,
}

/// Millisecond-precision UTC timestamp, written as RFC 3339.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn now() -> Self {
        Self(Utc::now().timestamp_millis())
    }

    pub fn from_millis(ms: i64) -> Self {
        Self(ms)
    }

    pub fn millis(self) -> i64 {
        self.0
    }

    pub fn datetime(self) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(self.0)
            .single()
            .unwrap_or(DateTime::<Utc>::MIN_UTC)
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.datetime().to_rfc3339_opts(SecondsFormat::Millis, true))
    }
}

impl std::str::FromStr for Timestamp {
    type Err = chrono::ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Self(DateTime::parse_from_rfc3339(s)?.timestamp_millis()))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckEvent {
    pub event_id: u64,
    pub user: String,
    pub activity: String,
    pub kind: EventKind,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_id: Option<String>,
    #[serde(default)]
    pub theory_snapshot: Vec<TheorySnapshot>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Durations>,
    /// Set when the check could not reach a verdict (e.g. prover unavailable).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// An event before the store assigns its id (and, usually, its timestamp).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEvent {
    pub user: String,
    pub activity: String,
    pub kind: EventKind,
    pub check_id: Option<String>,
    pub theory_snapshot: Vec<TheorySnapshot>,
    pub diagnostics: Vec<Diagnostic>,
    pub durations: Option<Durations>,
    pub failure: Option<String>,
    /// Overrides the store clock; must not precede the user's last event.
    pub timestamp: Option<Timestamp>,
}

impl NewEvent {
    pub fn new(user: impl Into<String>, activity: impl Into<String>, kind: EventKind) -> Self {
        Self {
            user: user.into(),
            activity: activity.into(),
            kind,
            check_id: None,
            theory_snapshot: Vec::new(),
            diagnostics: Vec::new(),
            durations: None,
            failure: None,
            timestamp: None,
        }
    }

    pub fn check_id(mut self, id: impl Into<String>) -> Self {
        self.check_id = Some(id.into());
        self
    }

    pub fn snapshot(mut self, name: impl Into<String>, content: impl Into<String>) -> Self {
        self.theory_snapshot.push(TheorySnapshot {
            name: name.into(),
            content: content.into(),
        });
        self
    }

    pub fn diagnostics(mut self, diagnostics: Vec<Diagnostic>) -> Self {
        self.diagnostics = diagnostics;
        self
    }

    pub fn durations(mut self, durations: Durations) -> Self {
        self.durations = Some(durations);
        self
    }

    pub fn failure(mut self, failure: impl Into<String>) -> Self {
        self.failure = Some(failure.into());
        self
    }

    pub fn at(mut self, timestamp: Timestamp) -> Self {
        self.timestamp = Some(timestamp);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("telemetry storage is full")]
    StorageFull,
    #[error("invalid event: {0}")]
    Invalid(String),
    #[error("corrupt log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("import: {0}")]
    Import(String),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for TelemetryError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            Self::StorageFull
        } else {
            Self::Io(e)
        }
    }
}

pub type Result<T> = std::result::Result<T, TelemetryError>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    #[serde(default)]
    pub user: Option<String>,
    #[serde(default)]
    pub activity: Option<String>,
    #[serde(default)]
    pub kind: Option<EventKind>,
    /// Inclusive lower bound.
    #[serde(default)]
    pub since: Option<Timestamp>,
    /// Exclusive upper bound.
    #[serde(default)]
    pub until: Option<Timestamp>,
}

impl EventFilter {
    pub fn user(user: impl Into<String>) -> Self {
        Self {
            user: Some(user.into()),
            ..Self::default()
        }
    }

    pub fn matches(&self, e: &CheckEvent) -> bool {
        self.user.as_ref().is_none_or(|u| *u == e.user)
            && self.activity.as_ref().is_none_or(|a| *a == e.activity)
            && self.kind.is_none_or(|k| k == e.kind)
            && self.since.is_none_or(|t| e.timestamp >= t)
            && self.until.is_none_or(|t| e.timestamp < t)
    }
}

/// Sorts events by (timestamp, event_id).
pub fn sort_events(events: &mut [CheckEvent]) {
    events.sort_by_key(|e| (e.timestamp, e.event_id));
}

#[derive(Debug, Clone, Default)]
pub struct StoreOptions {
    /// Refuse appends that would grow the log beyond this many bytes.
    pub max_bytes: Option<u64>,
}

struct Writer {
    file: File,
    bytes: u64,
    next_id: u64,
    last_timestamp: Timestamp,
    user_last: HashMap<String, Timestamp>,
    submitted: HashSet<(String, String)>,
}

pub struct TelemetryStore {
    path: PathBuf,
    options: StoreOptions,
    writer: Mutex<Writer>,
    index: RwLock<Vec<Arc<CheckEvent>>>,
}

impl TelemetryStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(path, StoreOptions::default())
    }

    pub fn open_with(path: impl AsRef<Path>, options: StoreOptions) -> Result<Self> {
        let path = path.as_ref().to_owned();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let (events, good_len) = read_log(&mut file)?;
        if good_len < file.metadata()?.len() {
            // A crash mid-append leaves a partial final line; it was never acknowledged.
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        let mut writer = Writer {
            file,
            bytes: good_len,
            next_id: 1,
            last_timestamp: Timestamp::from_millis(i64::MIN),
            user_last: HashMap::new(),
            submitted: HashSet::new(),
        };
        for e in &events {
            writer.note(e);
        }
        Ok(Self {
            path,
            options,
            writer: Mutex::new(writer),
            index: RwLock::new(events.into_iter().map(Arc::new).collect()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends an event durably and returns its id.
    pub fn record_event(&self, event: NewEvent) -> Result<u64> {
        validate(&event)?;
        let mut w = self.writer.lock();
        if matches!(
            event.kind,
            EventKind::ResultReceived | EventKind::StructureRejected
        ) {
            let key = (event.user.clone(), event.check_id.clone().unwrap_or_default());
            if !w.submitted.contains(&key) {
                return Err(TelemetryError::Invalid(format!(
                    "{:?} for check {:?} has no earlier check-submitted event",
                    event.kind, key.1
                )));
            }
        }
        let user_last = w.user_last.get(&event.user).copied();
        let timestamp = match event.timestamp {
            Some(t) => {
                if user_last.is_some_and(|last| t < last) {
                    return Err(TelemetryError::Invalid(
                        "timestamp precedes the user's previous event".into(),
                    ));
                }
                t
            }
            None => Timestamp::now()
                .max(w.last_timestamp)
                .max(user_last.unwrap_or(Timestamp::from_millis(i64::MIN))),
        };
        let record = CheckEvent {
            event_id: w.next_id,
            user: event.user,
            activity: event.activity,
            kind: event.kind,
            timestamp,
            check_id: event.check_id,
            theory_snapshot: event.theory_snapshot,
            diagnostics: event.diagnostics,
            durations: event.durations,
            failure: event.failure,
        };
        self.append_locked(&mut w, record)
    }

    fn append_locked(&self, w: &mut Writer, record: CheckEvent) -> Result<u64> {
        let mut line = serde_json::to_vec(&record).expect("events serialize");
        line.push(b'\n');
        if let Some(max) = self.options.max_bytes {
            if w.bytes + line.len() as u64 > max {
                return Err(TelemetryError::StorageFull);
            }
        }
        if let Err(e) = w.file.write_all(&line).and_then(|()| w.file.sync_data()) {
            // Drop whatever part of the line made it out so the log stays parseable.
            let _ = w.file.set_len(w.bytes);
            return Err(e.into());
        }
        w.bytes += line.len() as u64;
        w.note(&record);
        let id = record.event_id;
        self.index.write().push(Arc::new(record));
        Ok(id)
    }

    /// Events matching `filter`, ascending by (timestamp, event_id).
    pub fn query(&self, filter: &EventFilter) -> Vec<CheckEvent> {
        let mut out: Vec<CheckEvent> = self
            .index
            .read()
            .iter()
            .filter(|e| filter.matches(e))
            .map(|e| CheckEvent::clone(e))
            .collect();
        sort_events(&mut out);
        out
    }

    /// Events with an id greater than `after`, in id order.
    pub fn events_after(&self, after: u64, filter: &EventFilter) -> Vec<CheckEvent> {
        let index = self.index.read();
        let start = index.partition_point(|e| e.event_id <= after);
        index[start..]
            .iter()
            .filter(|e| filter.matches(e))
            .map(|e| CheckEvent::clone(e))
            .collect()
    }

    /// Writes the schema header and the matching events, one per line.
    pub fn export<W: Write>(&self, filter: &EventFilter, mut out: W) -> Result<usize> {
        let events = self.query(filter);
        write_export(&events, &mut out)?;
        Ok(events.len())
    }

    /// Appends exported events, keeping their ids and timestamps. Ids must
    /// be greater than every id already in the store.
    pub fn import<R: BufRead>(&self, input: R) -> Result<usize> {
        let events = read_export(input)?;
        let mut w = self.writer.lock();
        let mut count = 0;
        for e in events {
            if e.event_id < w.next_id {
                return Err(TelemetryError::Import(format!(
                    "event id {} is not above the store's last id {}",
                    e.event_id,
                    w.next_id - 1
                )));
            }
            self.append_locked(&mut w, e)?;
            count += 1;
        }
        Ok(count)
    }
}

impl Writer {
    fn note(&mut self, e: &CheckEvent) {
        self.next_id = self.next_id.max(e.event_id + 1);
        self.last_timestamp = self.last_timestamp.max(e.timestamp);
        let last = self.user_last.entry(e.user.clone()).or_insert(e.timestamp);
        *last = (*last).max(e.timestamp);
        if e.kind == EventKind::CheckSubmitted {
            if let Some(id) = &e.check_id {
                self.submitted.insert((e.user.clone(), id.clone()));
            }
        }
    }
}

fn validate(e: &NewEvent) -> Result<()> {
    if e.user.is_empty() {
        return Err(TelemetryError::Invalid("empty user id".into()));
    }
    match e.kind {
        EventKind::CheckSubmitted => {
            if e.theory_snapshot.is_empty() {
                return Err(TelemetryError::Invalid(
                    "check-submitted requires a theory snapshot".into(),
                ));
            }
            if !e.diagnostics.is_empty() {
                return Err(TelemetryError::Invalid(
                    "check-submitted carries no diagnostics".into(),
                ));
            }
            if e.check_id.is_none() {
                return Err(TelemetryError::Invalid("check-submitted needs a check id".into()));
            }
        }
        EventKind::ResultReceived | EventKind::StructureRejected if e.check_id.is_none() => {
            return Err(TelemetryError::Invalid(format!("{:?} needs a check id", e.kind)));
        }
        _ => {}
    }
    Ok(())
}

/// Parses the log, stopping before an unparseable final line. Returns the
/// events and the byte length of the well-formed prefix.
fn read_log(file: &mut File) -> Result<(Vec<CheckEvent>, u64)> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&mut *file);
    let mut events = Vec::new();
    let mut good = 0u64;
    let mut line = Vec::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with(b"\n");
        match serde_json::from_slice::<CheckEvent>(&line) {
            Ok(e) if complete => {
                events.push(e);
                good += n as u64;
            }
            result => {
                let at_end = reader.fill_buf()?.is_empty();
                if at_end {
                    break;
                }
                let message = match result {
                    Err(e) => e.to_string(),
                    Ok(_) => "unterminated line".into(),
                };
                return Err(TelemetryError::Corrupt {
                    line: lineno,
                    message,
                });
            }
        }
    }
    Ok((events, good))
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportHeader {
    schema: String,
    version: u32,
}

pub fn write_export<W: Write>(events: &[CheckEvent], out: &mut W) -> Result<()> {
    let header = ExportHeader {
        schema: EXPORT_SCHEMA.into(),
        version: EXPORT_VERSION,
    };
    serde_json::to_writer(&mut *out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for e in events {
        serde_json::to_writer(&mut *out, e).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an export produced by [`write_export`].
pub fn read_export<R: BufRead>(input: R) -> Result<Vec<CheckEvent>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| TelemetryError::Import("missing schema header".into()))??;
    let header: ExportHeader = serde_json::from_str(&header)
        .map_err(|e| TelemetryError::Import(format!("bad header: {e}")))?;
    if header.schema != EXPORT_SCHEMA || header.version != EXPORT_VERSION {
        return Err(TelemetryError::Import(format!(
            "unsupported schema {} version {}",
            header.schema, header.version
        )));
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| {
            TelemetryError::Import(format!("line {}: {e}", i + 2))
        })?);
    }
    Ok(events)
}

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use bytes::BytesMut;
use futures::StreamExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::io::{AsyncRead, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tokio_util::codec::{Decoder, FramedRead};
use tracing::{debug, info, warn};

use super::evaluate::evaluate;
use crate::client::theory_path;
use crate::framing::{write_frame, Command, FrameCodec, Reply, ReplyTag};
use crate::messages::{
    ErrorKind, ErrorPayload, FailedPayload, FinishedPayload, NotePayload, ProverSessionId,
    PurgeTheoriesArgs, SessionStartArgs, SessionStopArgs, TaskAck, TaskId, UseTheoriesArgs,
};

/// Parent sessions the mock can "build".
pub const KNOWN_PARENT_SESSIONS: &[&str] = &["Pure", "HOL", "Main"];

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub password: String,
    pub default_latency: Duration,
}

impl MockConfig {
    pub fn new(password: impl Into<String>, default_latency: Duration) -> Self {
        Self {
            password: password.into(),
            default_latency,
        }
    }
}

/// A `use_theories` request as seen by the mock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub session_id: ProverSessionId,
    pub theories: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub parent: String,
    pub options: Vec<String>,
}

impl SessionRecord {
    /// The `headless_consolidate_delay` the session was started with, in seconds.
    pub fn consolidate_delay(&self) -> Option<f64> {
        self.options
            .iter()
            .find_map(|o| o.strip_prefix("headless_consolidate_delay="))
            .and_then(|v| v.parse().ok())
    }
}

/// Counters and logs the mock keeps for test assertions.
#[derive(Debug, Default)]
pub struct MockState {
    connections: AtomicU64,
    rejected_logins: AtomicU64,
    sessions: Mutex<HashMap<ProverSessionId, SessionRecord>>,
    submissions: Mutex<Vec<Submission>>,
    next_task: AtomicU64,
}

impl MockState {
    pub fn connections(&self) -> u64 {
        self.connections.load(Ordering::SeqCst)
    }

    pub fn rejected_logins(&self) -> u64 {
        self.rejected_logins.load(Ordering::SeqCst)
    }

    pub fn session(&self, id: &ProverSessionId) -> Option<SessionRecord> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn submissions(&self) -> Vec<Submission> {
        self.submissions.lock().unwrap().clone()
    }

    /// Total number of theories submitted for checking.
    pub fn theories_checked(&self) -> usize {
        self.submissions
            .lock()
            .unwrap()
            .iter()
            .map(|s| s.theories.len())
            .sum()
    }

    fn next_task(&self) -> TaskId {
        TaskId(format!("task-{}", self.next_task.fetch_add(1, Ordering::SeqCst) + 1))
    }
}

/// A running TCP mock prover.
pub struct MockProver {
    addr: SocketAddr,
    state: Arc<MockState>,
    accept: JoinHandle<()>,
    live: Arc<Mutex<Vec<tokio::task::AbortHandle>>>,
}

impl MockProver {
    /// Binds and starts accepting connections.
    pub async fn serve(bind: impl tokio::net::ToSocketAddrs, config: MockConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState::default());
        let config = Arc::new(config);
        let live: Arc<Mutex<Vec<tokio::task::AbortHandle>>> = Arc::default();
        let accept = {
            let state = state.clone();
            let live = live.clone();
            tokio::spawn(async move {
                loop {
                    let (stream, peer) = match listener.accept().await {
                        Ok(conn) => conn,
                        Err(err) => {
                            warn!(%err, "accept failed");
                            continue;
                        }
                    };
                    debug!(%peer, "mock connection");
                    let _ = stream.set_nodelay(true);
                    let (read, write) = stream.into_split();
                    let task = tokio::spawn(serve_connection(read, write, config.clone(), state.clone()));
                    let mut live = live.lock().unwrap();
                    live.retain(|t| !t.is_finished());
                    live.push(task.abort_handle());
                }
            })
        };
        info!(%addr, "mock prover listening");
        Ok(Self {
            addr,
            state,
            accept,
            live,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &Arc<MockState> {
        &self.state
    }

    /// Stops listening and drops every open connection, as a crash would.
    pub fn shutdown(&self) {
        self.accept.abort();
        for task in self.live.lock().unwrap().drain(..) {
            task.abort();
        }
    }
}

impl Drop for MockProver {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves a single connection on the given streams (e.g. stdin/stdout).
pub async fn serve_connection<R, W>(read: R, write: W, config: Arc<MockConfig>, state: Arc<MockState>)
where
    R: AsyncRead + Send + Unpin + 'static,
    W: AsyncWrite + Send + Unpin + 'static,
{
    state.connections.fetch_add(1, Ordering::SeqCst);
    let (out, rx) = mpsc::unbounded_channel::<Reply>();
    let writer = tokio::spawn(write_replies(write, rx));
    let mut frames = FramedRead::new(read, FrameCodec::new());

    match frames.next().await {
        Some(Ok(line)) if line == config.password => {
            let _ = out.send(Reply::new(ReplyTag::Ok, json!("mock-prover")));
        }
        Some(Ok(_)) => {
            state.rejected_logins.fetch_add(1, Ordering::SeqCst);
            let _ = out.send(error_reply(ErrorKind::BadPassword, "Bad password"));
            drop(out);
            let _ = writer.await;
            return;
        }
        _ => return,
    }

    let connection = Connection {
        config,
        state,
        out: out.clone(),
    };
    while let Some(frame) = frames.next().await {
        let text = match frame {
            Ok(text) => text,
            Err(err) => {
                debug!(%err, "client stream failed");
                break;
            }
        };
        match Command::parse(&text) {
            Ok(cmd) => connection.handle(cmd),
            Err(err) => {
                let _ = out.send(error_reply(ErrorKind::BadArguments, &err.to_string()));
            }
        }
        if out.is_closed() {
            break;
        }
    }
    drop(connection);
    drop(out);
    let _ = writer.await;
}

async fn write_replies<W: AsyncWrite + Unpin>(mut write: W, mut rx: mpsc::UnboundedReceiver<Reply>) {
    let mut buf = BytesMut::new();
    while let Some(reply) = rx.recv().await {
        buf.clear();
        write_frame(&reply.to_text(), &mut buf);
        if write.write_all(&buf).await.is_err() || write.flush().await.is_err() {
            break;
        }
    }
    let _ = write.shutdown().await;
}

fn error_reply(kind: ErrorKind, message: &str) -> Reply {
    let payload = ErrorPayload {
        kind: Some(kind),
        message: message.to_owned(),
    };
    Reply::new(ReplyTag::Error, to_value(&payload))
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("payload serializes")
}

fn args<T: DeserializeOwned>(payload: Value) -> Result<T, Reply> {
    serde_json::from_value(payload).map_err(|e| error_reply(ErrorKind::BadArguments, &e.to_string()))
}

struct Connection {
    config: Arc<MockConfig>,
    state: Arc<MockState>,
    out: mpsc::UnboundedSender<Reply>,
}

impl Connection {
    /// Handles one command. The synchronous reply is queued before anything
    /// the command's task emits later (`NOTE`/`FINISHED`/`FAILED`).
    fn handle(&self, cmd: Command) {
        let result = match cmd.name.as_str() {
            "session_start" => args(cmd.payload).map(|a| self.session_start(a)),
            "use_theories" => args(cmd.payload).and_then(|a| self.use_theories(a)),
            "purge_theories" => args(cmd.payload).and_then(|a| self.purge_theories(a)),
            "session_stop" => args(cmd.payload).and_then(|a| self.session_stop(a)),
            "echo" => {
                self.send(Reply::new(ReplyTag::Ok, cmd.payload));
                Ok(())
            }
            other => Err(error_reply(
                ErrorKind::UnknownCommand,
                &format!("Unknown command {other:?}"),
            )),
        };
        if let Err(reply) = result {
            self.send(reply);
        }
    }

    fn send(&self, reply: Reply) {
        let _ = self.out.send(reply);
    }

    fn ack(&self, task: &TaskId) -> Reply {
        Reply::new(ReplyTag::Ok, to_value(&TaskAck { task: task.clone() }))
    }

    /// Session start is instant: the verdict directly follows the ack.
    fn session_start(&self, a: SessionStartArgs) {
        let task = self.state.next_task();
        let ack = self.ack(&task);
        let terminal = if KNOWN_PARENT_SESSIONS.contains(&a.session.as_str()) {
            let id = ProverSessionId(format!("session-{}", uuid::Uuid::new_v4().simple()));
            self.state.sessions.lock().unwrap().insert(
                id.clone(),
                SessionRecord {
                    parent: a.session,
                    options: a.options,
                },
            );
            let payload = FinishedPayload {
                task: task.clone(),
                ok: true,
                session_id: Some(id),
                messages: Vec::new(),
            };
            Reply::new(ReplyTag::Finished, to_value(&payload))
        } else {
            let payload = FailedPayload {
                task,
                message: format!("Bad parent session {:?}", a.session),
            };
            Reply::new(ReplyTag::Failed, to_value(&payload))
        };
        self.send(ack);
        self.send(terminal);
    }

    fn use_theories(&self, a: UseTheoriesArgs) -> Result<(), Reply> {
        self.require_session(&a.session_id)?;
        let task = self.state.next_task();
        self.state.submissions.lock().unwrap().push(Submission {
            session_id: a.session_id.clone(),
            theories: a.theories.clone(),
        });
        self.send(self.ack(&task));
        let out = self.out.clone();
        let latency = self.config.default_latency;
        tokio::spawn(async move {
            run_check(task, a.theories, a.master_dir.as_path(), latency, out).await;
        });
        Ok(())
    }

    fn purge_theories(&self, a: PurgeTheoriesArgs) -> Result<(), Reply> {
        self.require_session(&a.session_id)?;
        self.send(Reply::new(ReplyTag::Ok, json!({ "purged": a.theories })));
        Ok(())
    }

    fn session_stop(&self, a: SessionStopArgs) -> Result<(), Reply> {
        self.require_session(&a.session_id)?;
        self.state.sessions.lock().unwrap().remove(&a.session_id);
        self.send(Reply::new(ReplyTag::Ok, json!({})));
        Ok(())
    }

    fn require_session(&self, id: &ProverSessionId) -> Result<(), Reply> {
        if self.state.sessions.lock().unwrap().contains_key(id) {
            Ok(())
        } else {
            Err(error_reply(ErrorKind::UnknownSession, &id.0))
        }
    }
}

fn theory_name(theory: &str) -> String {
    Path::new(theory)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| theory.to_owned())
}

async fn run_check(
    task: TaskId,
    theories: Vec<String>,
    master_dir: &Path,
    latency: Duration,
    out: mpsc::UnboundedSender<Reply>,
) {
    let mut messages = Vec::new();
    let mut delay = latency;
    for theory in &theories {
        let name = theory_name(theory);
        let note = NotePayload {
            task: task.clone(),
            message: format!("Checking theory {name}"),
            theory: Some(name.clone()),
        };
        let _ = out.send(Reply::new(ReplyTag::Note, to_value(&note)));
        let path = theory_path(master_dir, theory);
        let text = match tokio::fs::read_to_string(&path).await {
            Ok(text) => text,
            Err(err) => {
                let failed = FailedPayload {
                    task,
                    message: format!("Cannot load theory file {}: {err}", path.display()),
                };
                let _ = out.send(Reply::new(ReplyTag::Failed, to_value(&failed)));
                return;
            }
        };
        let eval = evaluate(&text, &name);
        delay += eval.delay;
        messages.extend(eval.messages);
    }
    tokio::time::sleep(delay).await;
    let finished = FinishedPayload {
        task,
        ok: !messages
            .iter()
            .any(|m| m.kind == crate::messages::MessageKind::Error),
        session_id: None,
        messages,
    };
    let _ = out.send(Reply::new(ReplyTag::Finished, to_value(&finished)));
}

/// Decodes raw frames and parses them as commands; used by the conformance tests.
pub fn decode_commands(bytes: &[u8]) -> Result<Vec<Command>, crate::framing::FramingError> {
    let mut codec = FrameCodec::new();
    let mut buf = BytesMut::from(bytes);
    let mut out = Vec::new();
    while let Some(text) = codec.decode_eof(&mut buf)? {
        out.push(Command::parse(&text)?);
    }
    Ok(out)
}

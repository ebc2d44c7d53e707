//! Prover client over TCP or a child process's stdio.
//!
//! One [`ProverConnection`] carries many in-flight tasks. Commands are written
//! one at a time; each command gets exactly one synchronous `OK`/`ERROR` reply
//! in submission order, so acknowledgements are matched FIFO. Asynchronous
//! replies (`NOTE`, `FINISHED`, `FAILED`) carry a task id and are routed to the
//! task table. A task is registered by the reader before its acknowledgement is
//! handed to the caller, so no reply for it can be missed.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime};

use futures::StreamExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::process::{Child, Command};
use tokio::sync::{oneshot, watch};
use tokio_util::codec::FramedRead;
use tracing::{debug, warn};

use crate::framing::{frame_encode, FramingError, Reply, ReplyCodec, ReplyTag};
use crate::messages::{
    ErrorKind, ErrorPayload, FailedPayload, FinishedPayload, NotePayload, ProgressNote,
    ProverSessionId, PurgeTheoriesArgs, SessionOptions, SessionStartArgs, SessionStopArgs,
    TaskAck, TaskId, TaskOutcome, UseTheoriesArgs, Verdict,
};

/// Default time to wait for a task's verdict.
pub const DEFAULT_TASK_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection refused by {0}")]
    ConnectionRefused(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error("prover error: {0}")]
    Prover(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} did not finish in time")]
    Timeout(TaskId),
    #[error("connection to prover lost")]
    ConnectionLost,
    #[error("invalid prover address: {0}")]
    InvalidAddress(String),
    #[error("{path}: {source}")]
    TheoryFile {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

/// A password that is not printed by `Debug`.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp { host: String, port: u16 },
    /// A shell command line whose stdin/stdout speak the protocol.
    Pipe { command: String },
}

impl Transport {
    fn validate(&self) -> Result<()> {
        match self {
            Transport::Tcp { host, .. } if host.trim().is_empty() => {
                Err(ClientError::InvalidAddress("empty host".into()))
            }
            Transport::Pipe { command } if command.trim().is_empty() => {
                Err(ClientError::InvalidAddress("empty command".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Tcp { host, port } => write!(f, "tcp:{host}:{port}"),
            Transport::Pipe { command } => write!(f, "pipe:{command}"),
        }
    }
}

/// `tcp:HOST:PORT` or `pipe:COMMAND LINE`.
impl FromStr for Transport {
    type Err = ClientError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ClientError::InvalidAddress(s.to_owned());
        let transport = if let Some(rest) = s.strip_prefix("tcp:") {
            let (host, port) = rest.rsplit_once(':').ok_or_else(bad)?;
            Transport::Tcp {
                host: host.to_owned(),
                port: port.parse().map_err(|_| bad())?,
            }
        } else if let Some(command) = s.strip_prefix("pipe:") {
            Transport::Pipe {
                command: command.to_owned(),
            }
        } else {
            return Err(bad());
        };
        transport.validate()?;
        Ok(transport)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProverAddress {
    pub transport: Transport,
    pub password: Secret,
}

impl ProverAddress {
    pub fn tcp(host: impl Into<String>, port: u16, password: impl Into<String>) -> Self {
        Self {
            transport: Transport::Tcp {
                host: host.into(),
                port,
            },
            password: Secret::new(password),
        }
    }

    pub fn pipe(command: impl Into<String>, password: impl Into<String>) -> Self {
        Self {
            transport: Transport::Pipe {
                command: command.into(),
            },
            password: Secret::new(password),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct TaskState {
    progress: Vec<ProgressNote>,
    terminal: Option<Terminal>,
}

#[derive(Debug, Clone)]
enum Terminal {
    Outcome {
        outcome: TaskOutcome,
        session_id: Option<ProverSessionId>,
    },
    Lost,
}

type Writer = Box<dyn AsyncWrite + Send + Unpin>;
type ReplyReader = FramedRead<Box<dyn AsyncRead + Send + Unpin>, ReplyCodec>;

struct Shared {
    acks: Mutex<VecDeque<oneshot::Sender<Reply>>>,
    tasks: Mutex<HashMap<TaskId, watch::Sender<TaskState>>>,
    closed: AtomicBool,
}

impl Shared {
    fn dispatch(&self, reply: Reply) {
        match reply.tag {
            ReplyTag::Ok | ReplyTag::Error => {
                let Some(ack) = self.acks.lock().unwrap().pop_front() else {
                    warn!(tag = %reply.tag, "unsolicited reply dropped");
                    return;
                };
                if reply.tag == ReplyTag::Ok {
                    if let Some(task) = reply.task() {
                        self.tasks
                            .lock()
                            .unwrap()
                            .entry(TaskId(task.to_owned()))
                            .or_insert_with(|| watch::channel(TaskState::default()).0);
                    }
                }
                let _ = ack.send(reply);
            }
            ReplyTag::Note => match serde_json::from_value::<NotePayload>(reply.payload) {
                Ok(note) => {
                    let tasks = self.tasks.lock().unwrap();
                    match tasks.get(&note.task) {
                        Some(tx) => {
                            tx.send_modify(|state| {
                                if state.terminal.is_none() {
                                    state.progress.push(ProgressNote {
                                        received_at: SystemTime::now(),
                                        text: note.message,
                                    });
                                }
                            });
                        }
                        None => debug!(task = %note.task, "note for unknown task"),
                    }
                }
                Err(err) => debug!(%err, "note without task"),
            },
            ReplyTag::Finished | ReplyTag::Failed => {
                let (outcome, session_id) = match terminal_outcome(&reply) {
                    Ok(o) => o,
                    Err(err) => {
                        warn!(%err, "malformed verdict dropped");
                        return;
                    }
                };
                let tasks = self.tasks.lock().unwrap();
                match tasks.get(&outcome.task_id) {
                    Some(tx) => {
                        tx.send_modify(|state| {
                            if state.terminal.is_none() {
                                let mut outcome = outcome;
                                outcome.progress = state.progress.clone();
                                state.terminal = Some(Terminal::Outcome {
                                    outcome,
                                    session_id,
                                });
                            }
                        });
                    }
                    None => warn!(task = %outcome.task_id, "verdict for unknown task dropped"),
                }
            }
        }
    }

    fn shut_down(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.acks.lock().unwrap().clear();
        for tx in self.tasks.lock().unwrap().values() {
            tx.send_modify(|state| {
                if state.terminal.is_none() {
                    state.terminal = Some(Terminal::Lost);
                }
            });
        }
    }
}

fn terminal_outcome(reply: &Reply) -> Result<(TaskOutcome, Option<ProverSessionId>)> {
    let violation = |e: serde_json::Error| ClientError::ProtocolViolation(e.to_string());
    Ok(match reply.tag {
        ReplyTag::Finished => {
            let p: FinishedPayload =
                serde_json::from_value(reply.payload.clone()).map_err(violation)?;
            let outcome = TaskOutcome {
                task_id: p.task,
                progress: Vec::new(),
                verdict: Verdict::Finished,
                messages: p.messages,
                failure: None,
            };
            (outcome, p.session_id)
        }
        _ => {
            let p: FailedPayload =
                serde_json::from_value(reply.payload.clone()).map_err(violation)?;
            let outcome = TaskOutcome {
                task_id: p.task,
                progress: Vec::new(),
                verdict: Verdict::Failed,
                messages: Vec::new(),
                failure: Some(p.message),
            };
            (outcome, None)
        }
    })
}

/// Live view of a task's progress.
pub struct TaskWatch {
    rx: watch::Receiver<TaskState>,
    task: TaskId,
}

impl TaskWatch {
    pub fn task(&self) -> &TaskId {
        &self.task
    }

    /// Progress notes received so far.
    pub fn progress(&self) -> Vec<ProgressNote> {
        self.rx.borrow().progress.clone()
    }

    pub fn is_done(&self) -> bool {
        self.rx.borrow().terminal.is_some()
    }

    /// Waits for the next change (new note or verdict). Returns false once the
    /// connection is gone and nothing more will arrive.
    pub async fn changed(&mut self) -> bool {
        self.rx.changed().await.is_ok()
    }
}

/// A shareable handle to one prover connection.
#[derive(Clone)]
pub struct ProverConnection {
    writer: Arc<tokio::sync::Mutex<Writer>>,
    shared: Arc<Shared>,
    child: Arc<tokio::sync::Mutex<Option<Child>>>,
    task_timeout: Duration,
}

impl fmt::Debug for ProverConnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProverConnection")
            .field("closed", &self.is_closed())
            .finish_non_exhaustive()
    }
}

impl ProverConnection {
    /// Connects, sends the password line, and waits for the greeting.
    pub async fn connect(addr: &ProverAddress) -> Result<Self> {
        addr.transport.validate()?;
        match &addr.transport {
            Transport::Tcp { host, port } => {
                let stream = TcpStream::connect((host.as_str(), *port))
                    .await
                    .map_err(|e| match e.kind() {
                        io::ErrorKind::ConnectionRefused => {
                            ClientError::ConnectionRefused(format!("{host}:{port}"))
                        }
                        _ => ClientError::Io(e),
                    })?;
                stream.set_nodelay(true)?;
                let (read, write) = stream.into_split();
                Self::handshake(Box::new(read), Box::new(write), None, &addr.password).await
            }
            Transport::Pipe { command } => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(command)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .kill_on_drop(true)
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Self::handshake(Box::new(stdout), Box::new(stdin), Some(child), &addr.password)
                    .await
            }
        }
    }

    /// Runs the handshake over an already-open byte stream.
    pub async fn from_stream<R, W>(read: R, write: W, password: &Secret) -> Result<Self>
    where
        R: AsyncRead + Send + Unpin + 'static,
        W: AsyncWrite + Send + Unpin + 'static,
    {
        Self::handshake(Box::new(read), Box::new(write), None, password).await
    }

    async fn handshake(
        read: Box<dyn AsyncRead + Send + Unpin>,
        mut write: Writer,
        child: Option<Child>,
        password: &Secret,
    ) -> Result<Self> {
        if password.expose().contains('\n') {
            return Err(ClientError::AuthFailed("password contains a newline".into()));
        }
        write
            .write_all(format!("{}\n", password.expose()).as_bytes())
            .await?;
        write.flush().await?;
        let mut reader: ReplyReader = FramedRead::new(read, ReplyCodec::new());
        let greeting = match reader.next().await {
            Some(Ok(reply)) => reply,
            Some(Err(FramingError::Io(e))) => return Err(e.into()),
            Some(Err(e)) => return Err(ClientError::ProtocolViolation(e.to_string())),
            None => {
                return Err(ClientError::ProtocolViolation(
                    "connection closed before greeting".into(),
                ))
            }
        };
        match greeting.tag {
            ReplyTag::Ok => {}
            ReplyTag::Error => return Err(ClientError::AuthFailed(greeting.message())),
            other => {
                return Err(ClientError::ProtocolViolation(format!(
                    "unexpected greeting {other}"
                )))
            }
        }
        let shared = Arc::new(Shared {
            acks: Mutex::new(VecDeque::new()),
            tasks: Mutex::new(HashMap::new()),
            closed: AtomicBool::new(false),
        });
        tokio::spawn(read_loop(reader, shared.clone()));
        Ok(Self {
            writer: Arc::new(tokio::sync::Mutex::new(write)),
            shared,
            child: Arc::new(tokio::sync::Mutex::new(child)),
            task_timeout: DEFAULT_TASK_TIMEOUT,
        })
    }

    pub fn with_task_timeout(mut self, timeout: Duration) -> Self {
        self.task_timeout = timeout;
        self
    }

    pub fn task_timeout(&self) -> Duration {
        self.task_timeout
    }

    pub fn is_closed(&self) -> bool {
        self.shared.closed.load(Ordering::SeqCst)
    }

    /// Sends a command and waits for its synchronous reply.
    pub async fn command<T: Serialize + ?Sized>(&self, name: &str, payload: &T) -> Result<Reply> {
        let bytes = frame_encode(name, payload)?;
        let (tx, rx) = oneshot::channel();
        {
            let mut writer = self.writer.lock().await;
            if self.is_closed() {
                return Err(ClientError::ConnectionLost);
            }
            self.shared.acks.lock().unwrap().push_back(tx);
            let written = async {
                writer.write_all(&bytes).await?;
                writer.flush().await
            }
            .await;
            if let Err(err) = written {
                debug!(%err, "write failed");
                self.shared.shut_down();
                return Err(ClientError::ConnectionLost);
            }
        }
        rx.await.map_err(|_| ClientError::ConnectionLost)
    }

    async fn task_command<T: Serialize + ?Sized>(&self, name: &str, payload: &T) -> Result<TaskId> {
        let reply = self.command(name, payload).await?;
        match reply.tag {
            ReplyTag::Ok => Ok(parse_payload::<TaskAck>(reply)?.task),
            _ => Err(command_error(reply)),
        }
    }

    /// Starts a prover session and waits until it is ready.
    pub async fn session_start(&self, opts: &SessionOptions) -> Result<ProverSessionId> {
        let args = SessionStartArgs {
            session: opts.parent_session.clone(),
            options: opts.prover_options(),
        };
        let task = self.task_command("session_start", &args).await?;
        let (outcome, session_id) = self.await_terminal(&task, self.task_timeout).await?;
        match outcome.verdict {
            Verdict::Failed => Err(ClientError::Prover(
                outcome.failure.unwrap_or_else(|| "session start failed".into()),
            )),
            Verdict::Finished => session_id.filter(|id| !id.0.is_empty()).ok_or_else(|| {
                ClientError::ProtocolViolation("session_start finished without session_id".into())
            }),
        }
    }

    /// Submits theories for checking. Paths are relative to `master_dir`; the
    /// `.thy` extension is optional. Returns as soon as the prover acknowledges.
    pub async fn use_theories(
        &self,
        session: &ProverSessionId,
        theories: &[String],
        master_dir: &Path,
    ) -> Result<TaskId> {
        for theory in theories {
            let path = theory_path(master_dir, theory);
            std::fs::File::open(&path).map_err(|source| ClientError::TheoryFile {
                path: path.clone(),
                source,
            })?;
        }
        let args = UseTheoriesArgs {
            session_id: session.clone(),
            theories: theories.to_vec(),
            master_dir: master_dir.to_path_buf(),
        };
        self.task_command("use_theories", &args).await
    }

    pub async fn purge_theories(
        &self,
        session: &ProverSessionId,
        theories: &[String],
    ) -> Result<()> {
        let args = PurgeTheoriesArgs {
            session_id: session.clone(),
            theories: theories.to_vec(),
        };
        self.simple_command("purge_theories", &args).await
    }

    pub async fn session_stop(&self, session: &ProverSessionId) -> Result<()> {
        let args = SessionStopArgs {
            session_id: session.clone(),
        };
        self.simple_command("session_stop", &args).await
    }

    async fn simple_command<T: Serialize + ?Sized>(&self, name: &str, args: &T) -> Result<()> {
        let reply = self.command(name, args).await?;
        match reply.tag {
            ReplyTag::Ok => Ok(()),
            _ => Err(command_error(reply)),
        }
    }

    /// Observes a task's progress without consuming its verdict.
    pub fn watch_task(&self, task: &TaskId) -> Result<TaskWatch> {
        let tasks = self.shared.tasks.lock().unwrap();
        let tx = tasks
            .get(task)
            .ok_or_else(|| ClientError::UnknownTask(task.clone()))?;
        Ok(TaskWatch {
            rx: tx.subscribe(),
            task: task.clone(),
        })
    }

    /// Waits for a task's verdict. The verdict is handed out once; afterwards
    /// the task is forgotten.
    pub async fn await_task(&self, task: &TaskId, timeout: Duration) -> Result<TaskOutcome> {
        self.await_terminal(task, timeout).await.map(|(outcome, _)| outcome)
    }

    async fn await_terminal(
        &self,
        task: &TaskId,
        timeout: Duration,
    ) -> Result<(TaskOutcome, Option<ProverSessionId>)> {
        let mut rx = {
            let tasks = self.shared.tasks.lock().unwrap();
            tasks
                .get(task)
                .ok_or_else(|| ClientError::UnknownTask(task.clone()))?
                .subscribe()
        };
        let terminal = match tokio::time::timeout(timeout, rx.wait_for(|s| s.terminal.is_some()))
            .await
        {
            Err(_) => return Err(ClientError::Timeout(task.clone())),
            Ok(Err(_)) => return Err(ClientError::ConnectionLost),
            Ok(Ok(state)) => state.terminal.clone().expect("terminal state"),
        };
        self.shared.tasks.lock().unwrap().remove(task);
        match terminal {
            Terminal::Outcome {
                outcome,
                session_id,
            } => Ok((outcome, session_id)),
            Terminal::Lost => Err(ClientError::ConnectionLost),
        }
    }

    /// Closes the connection and stops a child-process client, if any.
    pub async fn close(&self) {
        {
            let mut writer = self.writer.lock().await;
            let _ = writer.shutdown().await;
        }
        self.shared.shut_down();
        if let Some(mut child) = self.child.lock().await.take() {
            let _ = child.kill().await;
        }
    }
}

/// Resolves a theory reference against a master directory.
pub fn theory_path(master_dir: &Path, theory: &str) -> PathBuf {
    let path = master_dir.join(theory);
    if path.extension().is_some_and(|e| e == "thy") {
        path
    } else {
        master_dir.join(format!("{theory}.thy"))
    }
}

fn parse_payload<T: DeserializeOwned>(reply: Reply) -> Result<T> {
    serde_json::from_value(reply.payload).map_err(|e| ClientError::ProtocolViolation(e.to_string()))
}

fn command_error(reply: Reply) -> ClientError {
    if reply.tag != ReplyTag::Error {
        return ClientError::ProtocolViolation(format!("unexpected reply {}", reply.tag));
    }
    match serde_json::from_value::<ErrorPayload>(reply.payload.clone()) {
        Ok(ErrorPayload {
            kind: Some(ErrorKind::UnknownSession),
            message,
        }) => ClientError::UnknownSession(message),
        Ok(ErrorPayload { message, .. }) => ClientError::Prover(message),
        Err(_) => ClientError::Prover(reply.message()),
    }
}

async fn read_loop(mut reader: ReplyReader, shared: Arc<Shared>) {
    while let Some(next) = reader.next().await {
        match next {
            Ok(reply) => shared.dispatch(reply),
            Err(err) => {
                warn!(%err, "prover stream failed");
                break;
            }
        }
    }
    shared.shut_down();
}

//! Message framing for the prover wire protocol.
//!
//! Every message is UTF-8 text carried in one of two frames:
//!
//! ```text
//! short:  <message> LF                  (message must not contain LF)
//! long:   <N> LF <N bytes of message>   (N in ASCII decimal)
//! ```
//!
//! A message is `NAME [SP payload]`, where the payload is JSON. Commands sent
//! by the client use the short form; the server switches to the long form for
//! replies longer than [`LONG_FORM_THRESHOLD`] bytes. A long reply may arrive
//! split across any number of reads and is only parsed once all `N` bytes are
//! buffered.

use std::fmt;
use std::io;
use std::str::FromStr;

use bytes::{Buf, BytesMut};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tokio_util::codec::{Decoder, Encoder};

/// Replies longer than this are sent in the byte-count-prefixed form.
pub const LONG_FORM_THRESHOLD: usize = 100;

/// Upper bound on a single frame.
pub const DEFAULT_MAX_FRAME: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FramingError {
    #[error("stream ended inside a long frame: expected {expected} bytes, got {received}")]
    Truncated { expected: usize, received: usize },
    #[error("stream ended inside a line ({0} bytes without terminating LF)")]
    UnterminatedLine(usize),
    #[error("frame of {size} bytes exceeds limit of {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("message is not valid UTF-8")]
    InvalidUtf8,
    #[error("unknown reply tag {0:?}")]
    UnknownTag(String),
    #[error("malformed payload for {tag}: {source}")]
    Payload {
        tag: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid command name {0:?}")]
    InvalidCommand(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Splits a byte stream into message texts, accepting both frame forms.
#[derive(Debug)]
pub struct FrameCodec {
    state: FrameState,
    scanned: usize,
    max_frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameState {
    Line,
    Body(usize),
}

impl FrameCodec {
    pub fn new() -> Self {
        Self::with_max_frame(DEFAULT_MAX_FRAME)
    }

    pub fn with_max_frame(max_frame: usize) -> Self {
        Self {
            state: FrameState::Line,
            scanned: 0,
            max_frame,
        }
    }
}

impl Default for FrameCodec {
    fn default() -> Self {
        Self::new()
    }
}

fn into_text(bytes: &[u8]) -> Result<String, FramingError> {
    std::str::from_utf8(bytes)
        .map(str::to_owned)
        .map_err(|_| FramingError::InvalidUtf8)
}

impl Decoder for FrameCodec {
    type Item = String;
    type Error = FramingError;

    fn decode(&mut self, buf: &mut BytesMut) -> Result<Option<String>, FramingError> {
        loop {
            match self.state {
                FrameState::Line => {
                    let Some(pos) = buf[self.scanned..].iter().position(|&b| b == b'\n') else {
                        self.scanned = buf.len();
                        if buf.len() > self.max_frame {
                            return Err(FramingError::TooLarge {
                                size: buf.len(),
                                limit: self.max_frame,
                            });
                        }
                        return Ok(None);
                    };
                    let end = self.scanned + pos;
                    self.scanned = 0;
                    let mut line = buf.split_to(end + 1);
                    line.truncate(end);
                    if line.last() == Some(&b'\r') {
                        line.truncate(end - 1);
                    }
                    if line.is_empty() {
                        continue;
                    }
                    if line.iter().all(u8::is_ascii_digit) {
                        let size: usize = std::str::from_utf8(&line)
                            .ok()
                            .and_then(|s| s.parse().ok())
                            .unwrap_or(usize::MAX);
                        if size > self.max_frame {
                            return Err(FramingError::TooLarge {
                                size,
                                limit: self.max_frame,
                            });
                        }
                        self.state = FrameState::Body(size);
                        continue;
                    }
                    return into_text(&line).map(Some);
                }
                FrameState::Body(size) => {
                    if buf.len() < size {
                        buf.reserve(size - buf.len());
                        return Ok(None);
                    }
                    let body = buf.split_to(size);
                    self.state = FrameState::Line;
                    return into_text(&body).map(Some);
                }
            }
        }
    }

    fn decode_eof(&mut self, buf: &mut BytesMut) -> Result<Option<String>, FramingError> {
        if let Some(msg) = self.decode(buf)? {
            return Ok(Some(msg));
        }
        match self.state {
            FrameState::Body(expected) => Err(FramingError::Truncated {
                expected,
                received: buf.len(),
            }),
            FrameState::Line if !buf.is_empty() => {
                let leftover = buf.len();
                buf.advance(leftover);
                Err(FramingError::UnterminatedLine(leftover))
            }
            FrameState::Line => Ok(None),
        }
    }
}

impl Encoder<&str> for FrameCodec {
    type Error = FramingError;

    fn encode(&mut self, msg: &str, dst: &mut BytesMut) -> Result<(), FramingError> {
        write_frame(msg, dst);
        Ok(())
    }
}

/// Appends `msg` in the short form when it fits on one line, otherwise in the
/// long form.
pub fn write_frame(msg: &str, dst: &mut BytesMut) {
    if msg.len() > LONG_FORM_THRESHOLD || msg.contains('\n') {
        write_long_frame(msg, dst);
    } else {
        dst.reserve(msg.len() + 1);
        dst.extend_from_slice(msg.as_bytes());
        dst.extend_from_slice(b"\n");
    }
}

pub fn write_long_frame(msg: &str, dst: &mut BytesMut) {
    let header = format!("{}\n", msg.len());
    dst.reserve(header.len() + msg.len());
    dst.extend_from_slice(header.as_bytes());
    dst.extend_from_slice(msg.as_bytes());
}

/// Reply tags sent by the prover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplyTag {
    /// Synchronous acknowledgement of a command (or the greeting).
    Ok,
    /// Synchronous rejection of a command (or the greeting).
    Error,
    /// Asynchronous progress report for a running task.
    Note,
    /// Terminal verdict: the task ran to completion.
    Finished,
    /// Terminal verdict: the task could not be carried out.
    Failed,
}

impl ReplyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplyTag::Ok => "OK",
            ReplyTag::Error => "ERROR",
            ReplyTag::Note => "NOTE",
            ReplyTag::Finished => "FINISHED",
            ReplyTag::Failed => "FAILED",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, ReplyTag::Finished | ReplyTag::Failed)
    }
}

impl fmt::Display for ReplyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReplyTag {
    type Err = FramingError;

    fn from_str(s: &str) -> Result<Self, FramingError> {
        Ok(match s {
            "OK" => ReplyTag::Ok,
            "ERROR" => ReplyTag::Error,
            "NOTE" => ReplyTag::Note,
            "FINISHED" => ReplyTag::Finished,
            "FAILED" => ReplyTag::Failed,
            other => return Err(FramingError::UnknownTag(other.to_owned())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub tag: ReplyTag,
    pub payload: Value,
}

impl Reply {
    pub fn new(tag: ReplyTag, payload: Value) -> Self {
        Self { tag, payload }
    }

    /// Parses the text of one message (without framing).
    pub fn parse(text: &str) -> Result<Self, FramingError> {
        let (name, payload) = split_message(text);
        let tag: ReplyTag = name.parse()?;
        let payload = parse_payload(name, payload)?;
        Ok(Self { tag, payload })
    }

    pub fn to_text(&self) -> String {
        join_message(self.tag.as_str(), &self.payload)
    }

    /// The `task` field of the payload, if any.
    pub fn task(&self) -> Option<&str> {
        self.payload.get("task").and_then(Value::as_str)
    }

    /// Human-readable text of an `ERROR`/`FAILED` payload.
    pub fn message(&self) -> String {
        match &self.payload {
            Value::String(s) => s.clone(),
            Value::Object(map) => map
                .get("message")
                .and_then(Value::as_str)
                .map(str::to_owned)
                .unwrap_or_else(|| self.payload.to_string()),
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }
}

/// A client command: a bare word followed by a JSON payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub name: String,
    pub payload: Value,
}

impl Command {
    pub fn parse(text: &str) -> Result<Self, FramingError> {
        let (name, payload) = split_message(text);
        if !is_command_name(name) {
            return Err(FramingError::InvalidCommand(name.to_owned()));
        }
        let payload = parse_payload(name, payload)?;
        Ok(Self {
            name: name.to_owned(),
            payload,
        })
    }
}

fn is_command_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn split_message(text: &str) -> (&str, &str) {
    let text = text.strip_suffix('\n').unwrap_or(text);
    match text.split_once(' ') {
        Some((name, payload)) => (name, payload),
        None => (text, ""),
    }
}

fn parse_payload(name: &str, payload: &str) -> Result<Value, FramingError> {
    if payload.trim().is_empty() {
        return Ok(Value::Null);
    }
    serde_json::from_str(payload).map_err(|source| FramingError::Payload {
        tag: name.to_owned(),
        source,
    })
}

fn join_message(name: &str, payload: &Value) -> String {
    if payload.is_null() {
        name.to_owned()
    } else {
        format!("{name} {payload}")
    }
}

/// Encodes a command as `command SP payload LF`.
pub fn frame_encode<T: Serialize + ?Sized>(
    command: &str,
    payload: &T,
) -> Result<Vec<u8>, FramingError> {
    if !is_command_name(command) {
        return Err(FramingError::InvalidCommand(command.to_owned()));
    }
    let payload = serde_json::to_string(payload).map_err(|source| FramingError::Payload {
        tag: command.to_owned(),
        source,
    })?;
    let mut out = Vec::with_capacity(command.len() + payload.len() + 2);
    out.extend_from_slice(command.as_bytes());
    out.push(b' ');
    out.extend_from_slice(payload.as_bytes());
    out.push(b'\n');
    Ok(out)
}

/// Encodes a reply in whichever frame form its length calls for.
pub fn encode_reply(reply: &Reply) -> BytesMut {
    let mut out = BytesMut::new();
    write_frame(&reply.to_text(), &mut out);
    out
}

/// Reply-level codec: frames plus tag/payload parsing.
#[derive(Debug, Default)]
pub struct ReplyCodec {
    frames: FrameCodec,
}

impl ReplyCodec {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Decoder for ReplyCodec {
    type Item = Reply;
    type Error = FramingError;

    fn decode(&mut self, buf: &mut BytesMut) -> Result<Option<Reply>, FramingError> {
        self.frames
            .decode(buf)?
            .map(|text| Reply::parse(&text))
            .transpose()
    }

    fn decode_eof(&mut self, buf: &mut BytesMut) -> Result<Option<Reply>, FramingError> {
        self.frames
            .decode_eof(buf)?
            .map(|text| Reply::parse(&text))
            .transpose()
    }
}

impl Encoder<&Reply> for ReplyCodec {
    type Error = FramingError;

    fn encode(&mut self, reply: &Reply, dst: &mut BytesMut) -> Result<(), FramingError> {
        write_frame(&reply.to_text(), dst);
        Ok(())
    }
}

/// Decodes a complete byte sequence into replies; the sequence must end at a
/// message boundary.
pub fn frame_decode(bytes: &[u8]) -> Result<Vec<Reply>, FramingError> {
    decode_chunks(std::iter::once(bytes))
}

/// Decodes a reply stream delivered as a sequence of reads.
pub fn decode_chunks<'a>(
    chunks: impl IntoIterator<Item = &'a [u8]>,
) -> Result<Vec<Reply>, FramingError> {
    let mut codec = ReplyCodec::new();
    let mut buf = BytesMut::new();
    let mut out = Vec::new();
    for chunk in chunks {
        buf.extend_from_slice(chunk);
        while let Some(reply) = codec.decode(&mut buf)? {
            out.push(reply);
        }
    }
    while let Some(reply) = codec.decode_eof(&mut buf)? {
        out.push(reply);
    }
    Ok(out)
}

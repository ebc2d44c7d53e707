//! Protocol conformance checks shared by the client tests and the acceptance
//! suite.
//!
//! Two families of checks live here:
//!
//! * chunk-split invariance: reply streams produced by the mock's encoder are
//!   cut into random read chunks and decoded; the result must not depend on
//!   where the cuts fall;
//! * a scripted byte-level exchange against a live mock server.

use std::net::SocketAddr;
use std::time::Duration;

use bytes::BytesMut;
use rand::Rng;
use serde_json::json;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

use crate::framing::{decode_chunks, frame_encode, write_frame, Reply, ReplyTag};
use crate::messages::{FinishedPayload, MessageKind, NotePayload, ProverMessage, TaskId};
use crate::range::SourceRange;

const SAMPLE_TEXTS: &[&str] = &[
    "Type unification failed: Clash of types \"bool\" and \"nat\"",
    "Failed to apply initial proof method\u{2237}\ngoal (1 subgoal):\n 1. A \\<and> B \\<Longrightarrow> B \\<and> A",
    "Undefined fact: \"conjI'\"",
    "Inner syntax error\u{2410} at \"( A\"",
    "Failed to finish proof\u{2237}\ngoal (1 subgoal):\n 1. \u{2200}x. P x",
    "Legacy feature! ‹ascii› ∧ ∨ ¬ ⟶",
];

/// A plausible reply stream for one task whose encoding is roughly
/// `target_bytes` long.
pub fn sample_replies<R: Rng + ?Sized>(rng: &mut R, target_bytes: usize) -> Vec<Reply> {
    let task = TaskId(format!("task-{}", rng.random_range(1..10_000)));
    let mut replies = vec![
        Reply::new(ReplyTag::Ok, json!({ "task": task.0 })),
        Reply::new(
            ReplyTag::Note,
            serde_json::to_value(NotePayload {
                task: task.clone(),
                message: "Checking theory Scratch".into(),
                theory: Some("Scratch".into()),
            })
            .unwrap(),
        ),
    ];
    let mut messages = Vec::new();
    let mut size = 0;
    while size < target_bytes {
        let text = SAMPLE_TEXTS[rng.random_range(0..SAMPLE_TEXTS.len())];
        let repeat = rng.random_range(1..=4);
        let line = rng.random_range(1..500);
        let msg = ProverMessage {
            kind: match rng.random_range(0..3) {
                0 => MessageKind::Error,
                1 => MessageKind::Warning,
                _ => MessageKind::Info,
            },
            text: text.repeat(repeat),
            theory_name: "Scratch".into(),
            position: Some(SourceRange::new(line, 0, line, rng.random_range(0..80))),
        };
        size += serde_json::to_string(&msg).map_or(0, |s| s.len() + 1);
        messages.push(msg);
    }
    replies.push(Reply::new(
        ReplyTag::Finished,
        serde_json::to_value(FinishedPayload {
            task,
            ok: false,
            session_id: None,
            messages,
        })
        .unwrap(),
    ));
    replies
}

/// Encodes replies exactly as the mock server writes them.
pub fn encode_stream(replies: &[Reply]) -> Vec<u8> {
    let mut buf = BytesMut::new();
    for reply in replies {
        write_frame(&reply.to_text(), &mut buf);
    }
    buf.to_vec()
}

/// Random cut points splitting `len` bytes into read chunks.
pub fn random_partition<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<usize> {
    if len < 2 {
        return Vec::new();
    }
    let cuts = match rng.random_range(0..4) {
        0 => 1,
        1 => rng.random_range(1..8),
        2 => rng.random_range(8..256),
        _ => rng.random_range(256..2048).min(len - 1),
    };
    let mut points: Vec<usize> = (0..cuts).map(|_| rng.random_range(1..len)).collect();
    points.sort_unstable();
    points.dedup();
    points
}

pub fn split_at_points<'a>(bytes: &'a [u8], points: &[usize]) -> Vec<&'a [u8]> {
    let mut chunks = Vec::with_capacity(points.len() + 1);
    let mut prev = 0;
    for &p in points {
        chunks.push(&bytes[prev..p]);
        prev = p;
    }
    chunks.push(&bytes[prev..]);
    chunks
}

#[derive(Debug, Clone, Default)]
pub struct ChunkSplitReport {
    pub partitions: usize,
    pub streams: usize,
    pub largest_reply: usize,
    pub long_form_replies: usize,
}

/// Decodes `partitions` random partitions of freshly generated reply streams
/// (each reply at most `max_reply_bytes`) and checks every decode against the
/// unsplit one.
pub fn check_chunk_split<R: Rng + ?Sized>(
    rng: &mut R,
    partitions: usize,
    max_reply_bytes: usize,
) -> Result<ChunkSplitReport, String> {
    const PARTITIONS_PER_STREAM: usize = 10;
    let mut report = ChunkSplitReport::default();
    let mut stream_index = 0;
    while report.partitions < partitions {
        // Log-uniform reply sizes, with the first stream at the maximum.
        let target = if stream_index == 0 {
            max_reply_bytes - max_reply_bytes / 20
        } else {
            let exp = rng.random_range(6.0..(max_reply_bytes as f64).ln());
            (exp.exp() as usize).min(max_reply_bytes - max_reply_bytes / 20)
        };
        stream_index += 1;
        let replies = sample_replies(rng, target);
        let bytes = encode_stream(&replies);
        for reply in &replies {
            let len = reply.to_text().len();
            if len > max_reply_bytes {
                return Err(format!("generated reply of {len} bytes exceeds limit"));
            }
            report.largest_reply = report.largest_reply.max(len);
            if len > crate::framing::LONG_FORM_THRESHOLD {
                report.long_form_replies += 1;
            }
        }
        let whole = decode_chunks([bytes.as_slice()]).map_err(|e| e.to_string())?;
        if whole != replies {
            return Err("unsplit decode differs from the encoded replies".into());
        }
        for _ in 0..PARTITIONS_PER_STREAM {
            let points = random_partition(rng, bytes.len());
            let chunks = split_at_points(&bytes, &points);
            let decoded = decode_chunks(chunks).map_err(|e| e.to_string())?;
            if decoded != whole {
                return Err(format!(
                    "decode differs for stream of {} bytes split at {} points",
                    bytes.len(),
                    points.len()
                ));
            }
            report.partitions += 1;
        }
        report.streams += 1;
    }
    Ok(report)
}

async fn expect_bytes(stream: &mut TcpStream, expected: &[u8]) -> Result<(), String> {
    let mut got = vec![0u8; expected.len()];
    tokio::time::timeout(Duration::from_secs(5), stream.read_exact(&mut got))
        .await
        .map_err(|_| format!("timed out waiting for {:?}", String::from_utf8_lossy(expected)))?
        .map_err(|e| e.to_string())?;
    if got != expected {
        return Err(format!(
            "expected {:?}, got {:?}",
            String::from_utf8_lossy(expected),
            String::from_utf8_lossy(&got)
        ));
    }
    Ok(())
}

/// Runs a fixed byte-level exchange against a fresh mock server. Payload
/// objects are written with their keys in sorted order.
pub async fn scripted_exchange(addr: SocketAddr, password: &str) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();

    // Wrong password: ERROR greeting, then the server closes.
    let mut stream = TcpStream::connect(addr).await.map_err(io)?;
    stream.write_all(b"wrong\n").await.map_err(io)?;
    expect_bytes(
        &mut stream,
        b"ERROR {\"kind\":\"bad_password\",\"message\":\"Bad password\"}\n",
    )
    .await?;
    let mut rest = Vec::new();
    stream.read_to_end(&mut rest).await.map_err(io)?;
    if !rest.is_empty() {
        return Err("server kept talking after rejecting the password".into());
    }

    let mut stream = TcpStream::connect(addr).await.map_err(io)?;
    stream
        .write_all(format!("{password}\n").as_bytes())
        .await
        .map_err(io)?;
    expect_bytes(&mut stream, b"OK \"mock-prover\"\n").await?;

    let send = frame_encode("echo", &json!({"x": [1, 2]})).map_err(|e| e.to_string())?;
    stream.write_all(&send).await.map_err(io)?;
    expect_bytes(&mut stream, b"OK {\"x\":[1,2]}\n").await?;

    stream.write_all(b"frobnicate {}\n").await.map_err(io)?;
    expect_bytes(
        &mut stream,
        b"ERROR {\"kind\":\"unknown_command\",\"message\":\"Unknown command \\\"frobnicate\\\"\"}\n",
    )
    .await?;

    let send = frame_encode("session_start", &json!({"session": "Nope", "options": []}))
        .map_err(|e| e.to_string())?;
    stream.write_all(&send).await.map_err(io)?;
    expect_bytes(&mut stream, b"OK {\"task\":\"task-1\"}\n").await?;
    expect_bytes(
        &mut stream,
        b"FAILED {\"message\":\"Bad parent session \\\"Nope\\\"\",\"task\":\"task-1\"}\n",
    )
    .await?;

    let send = frame_encode(
        "use_theories",
        &json!({"session_id": "missing", "theories": ["A"], "master_dir": "/tmp"}),
    )
    .map_err(|e| e.to_string())?;
    stream.write_all(&send).await.map_err(io)?;
    expect_bytes(
        &mut stream,
        b"ERROR {\"kind\":\"unknown_session\",\"message\":\"missing\"}\n",
    )
    .await?;

    // A long-form command is accepted too.
    let body = format!("echo {}", json!({"pad": "p".repeat(150)}));
    let mut framed = format!("{}\n", body.len()).into_bytes();
    framed.extend_from_slice(body.as_bytes());
    stream.write_all(&framed).await.map_err(io)?;
    let reply_text = format!("OK {}", json!({"pad": "p".repeat(150)}));
    let mut expected = format!("{}\n", reply_text.len()).into_bytes();
    expected.extend_from_slice(reply_text.as_bytes());
    expect_bytes(&mut stream, &expected).await?;
    Ok(())
}

//! Deterministic "checking" driven by directive comments.
//!
//! A directive is a comment of the exact form `(*MOCK:kind arg "text"*)`:
//!
//! * `(*MOCK:error 3 "Type unification failed"*)` reports an error on line 3
//! * `(*MOCK:warning 5 "Unused variable"*)` reports a warning on line 5
//! * `(*MOCK:delay 0.5 ""*)` delays the verdict by half a second
//!
//! Every `sorry` outside comments and literals is reported as an error.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;

use crate::messages::{MessageKind, ProverMessage};
use crate::range::{line_range, SourceRange};

#[derive(Debug, Clone, PartialEq)]
pub enum MockDirective {
    Error { line: u32, text: String },
    Warning { line: u32, text: String },
    Delay(Duration),
}

static DIRECTIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\(\*MOCK:([a-z]+) ([^\s"]+) "((?:[^"\\]|\\.)*)"\*\)$"#).unwrap()
});

/// Result of evaluating one theory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub messages: Vec<ProverMessage>,
    pub delay: Duration,
}

/// Messages the mock reports for `text`.
pub fn evaluate_theory(text: &str) -> Vec<ProverMessage> {
    evaluate(text, "").messages
}

/// Messages plus the total requested delay, attributed to `theory_name`.
pub fn evaluate(text: &str, theory_name: &str) -> Evaluation {
    let mut positioned: Vec<(SourceRange, MessageKind, String)> = Vec::new();
    let mut delay = Duration::ZERO;

    for span in scan(text) {
        match span.kind {
            SpanKind::Comment => {
                let comment = &text[span.start..span.end];
                if !comment.starts_with("(*MOCK:") {
                    continue;
                }
                match parse_directive(comment, text) {
                    Some(MockDirective::Error { line, text: msg }) => {
                        positioned.push((line_range(text, line).unwrap(), MessageKind::Error, msg))
                    }
                    Some(MockDirective::Warning { line, text: msg }) => positioned.push((
                        line_range(text, line).unwrap(),
                        MessageKind::Warning,
                        msg,
                    )),
                    Some(MockDirective::Delay(d)) => delay += d,
                    None => positioned.push((
                        span.range,
                        MessageKind::Info,
                        format!("ignored malformed mock directive {comment}"),
                    )),
                }
            }
            SpanKind::Sorry => positioned.push((
                span.range,
                MessageKind::Error,
                "unfinished proof (sorry)".to_owned(),
            )),
        }
    }

    positioned.sort_by_key(|(range, _, _)| *range);
    Evaluation {
        messages: positioned
            .into_iter()
            .map(|(range, kind, text)| ProverMessage {
                kind,
                text,
                theory_name: theory_name.to_owned(),
                position: Some(range),
            })
            .collect(),
        delay,
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(next) = chars.next() {
                out.push(next);
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Parses one directive comment; `None` if it is malformed or names a line
/// outside `theory`.
pub fn parse_directive(comment: &str, theory: &str) -> Option<MockDirective> {
    let caps = DIRECTIVE.captures(comment)?;
    let arg = &caps[2];
    let text = unescape(&caps[3]);
    let line = || -> Option<u32> {
        let line: u32 = arg.parse().ok()?;
        line_range(theory, line).map(|_| line)
    };
    match &caps[1] {
        "error" if !text.is_empty() => Some(MockDirective::Error { line: line()?, text }),
        "warning" if !text.is_empty() => Some(MockDirective::Warning { line: line()?, text }),
        "delay" => {
            let secs: f64 = arg.parse().ok()?;
            Duration::try_from_secs_f64(secs).ok().map(MockDirective::Delay)
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpanKind {
    Comment,
    Sorry,
}

#[derive(Debug)]
struct Span {
    kind: SpanKind,
    start: usize,
    end: usize,
    range: SourceRange,
}

/// Finds top-level comments and `sorry` words, skipping string literals and
/// cartouches.
fn scan(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut positions = Vec::with_capacity(chars.len() + 1);
    let (mut line, mut col) = (1u32, 0u32);
    for &(_, c) in &chars {
        positions.push((line, col));
        if c == '\n' {
            line += 1;
            col = 0;
        } else {
            col += 1;
        }
    }
    positions.push((line, col));
    let range = |a: usize, b: usize| {
        let (l1, c1) = positions[a];
        let (l2, c2) = positions[b];
        SourceRange::new(l1, c1, l2, c2)
    };
    let is_ident = |c: char| c.is_alphanumeric() || c == '_' || c == '\'' || c == '.';

    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        let next = chars.get(i + 1).map(|&(_, c)| c);
        if c == '(' && next == Some('*') {
            let start = i;
            let mut depth = 0usize;
            while i < chars.len() {
                let c = chars[i].1;
                let next = chars.get(i + 1).map(|&(_, c)| c);
                if c == '(' && next == Some('*') {
                    depth += 1;
                    i += 2;
                } else if c == '*' && next == Some(')') {
                    depth -= 1;
                    i += 2;
                    if depth == 0 {
                        break;
                    }
                } else {
                    i += 1;
                }
            }
            spans.push(Span {
                kind: SpanKind::Comment,
                start: byte_at(start),
                end: byte_at(i),
                range: range(start, i),
            });
        } else if c == '"' {
            i += 1;
            while i < chars.len() && chars[i].1 != '"' {
                i += if chars[i].1 == '\\' { 2 } else { 1 };
            }
            i += 1;
        } else if c == '‹' {
            let mut depth = 0usize;
            while i < chars.len() {
                match chars[i].1 {
                    '‹' => depth += 1,
                    '›' => {
                        depth -= 1;
                        if depth == 0 {
                            i += 1;
                            break;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
        } else if is_ident(c) {
            let start = i;
            while i < chars.len() && is_ident(chars[i].1) {
                i += 1;
            }
            if text[byte_at(start)..byte_at(i)] == *"sorry" {
                spans.push(Span {
                    kind: SpanKind::Sorry,
                    start: byte_at(start),
                    end: byte_at(i),
                    range: range(start, i),
                });
            }
        } else {
            i += 1;
        }
    }
    spans
}

//! Structural pre-assessment: brackets, proof blocks and the theory frame.

use serde::{Deserialize, Serialize};

use super::token::{Token, TokenClass};
use crate::SourceRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureCode {
    UnbalancedBracket,
    UnclosedComment,
    UnclosedString,
    ProofWithoutQed,
    QedWithoutProof,
    MissingTheoryHeader,
    /// A `begin` block without its `end`, or an `end` with nothing to close.
    UnbalancedBlock,
}

impl StructureCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UnbalancedBracket => "unbalanced-bracket",
            Self::UnclosedComment => "unclosed-comment",
            Self::UnclosedString => "unclosed-string",
            Self::ProofWithoutQed => "proof-without-qed",
            Self::QedWithoutProof => "qed-without-proof",
            Self::MissingTheoryHeader => "missing-theory-header",
            Self::UnbalancedBlock => "unbalanced-block",
        }
    }
}

impl std::fmt::Display for StructureCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureDiagnostic {
    pub code: StructureCode,
    pub range: SourceRange,
    pub message: String,
}

impl StructureDiagnostic {
    fn new(code: StructureCode, range: SourceRange, message: impl Into<String>) -> Self {
        Self {
            code,
            range,
            message: message.into(),
        }
    }
}

fn closer_for(open: char) -> char {
    match open {
        '(' => ')',
        '[' => ']',
        _ => '}',
    }
}

fn is_open(c: char) -> bool {
    matches!(c, '(' | '[' | '{')
}

fn is_close(c: char) -> bool {
    matches!(c, ')' | ']' | '}')
}

#[derive(Default)]
struct BracketStack {
    open: Vec<(char, SourceRange)>,
}

impl BracketStack {
    fn push_char(&mut self, c: char, range: SourceRange, out: &mut Vec<StructureDiagnostic>) {
        if is_open(c) {
            self.open.push((c, range));
        } else if is_close(c) {
            // Recover at the nearest opener this closer matches; openers
            // above it are unclosed. A closer matching nothing is stray.
            match self.open.iter().rposition(|(o, _)| closer_for(*o) == c) {
                Some(at) => {
                    for (o, r) in self.open.drain(at + 1..) {
                        out.push(StructureDiagnostic::new(
                            StructureCode::UnbalancedBracket,
                            r,
                            format!("`{o}` is never closed before `{c}`"),
                        ));
                    }
                    self.open.pop();
                }
                None => out.push(StructureDiagnostic::new(
                    StructureCode::UnbalancedBracket,
                    range,
                    format!("`{c}` has no matching opening bracket"),
                )),
            }
        }
    }

    fn finish(self, out: &mut Vec<StructureDiagnostic>) {
        for (o, range) in self.open {
            out.push(StructureDiagnostic::new(
                StructureCode::UnbalancedBracket,
                range,
                format!("`{o}` is never closed"),
            ));
        }
    }
}

/// Brackets inside a string literal or cartouche, matched on their own stack.
/// Delimiters and `\<...>` symbols are skipped.
fn check_inner_brackets(token: &Token, out: &mut Vec<StructureDiagnostic>) {
    let mut stack = BracketStack::default();
    let (mut line, mut column) = (token.range.line, token.range.column);
    let mut rest = token.text.as_str();
    let mut first = true;
    while let Some(c) = rest.chars().next() {
        let mut step = c.len_utf8();
        if c == '\\' && rest[1..].starts_with('<') {
            if let Some(end) = rest.find('>') {
                step = end + 1;
            }
        } else if c == '\\' && token.class == TokenClass::StringLiteral {
            step += rest[1..].chars().next().map_or(0, char::len_utf8);
        } else if !first {
            stack.push_char(c, SourceRange::new(line, column, line, column + 1), out);
        }
        first = false;
        for skipped in rest[..step].chars() {
            if skipped == '\n' {
                line += 1;
                column = 0;
            } else {
                column += 1;
            }
        }
        rest = &rest[step..];
    }
    stack.finish(out);
}

/// Checks a token stream for bracket, block and header violations.
///
/// Diagnostics are reported in the order the scan finds them; unclosed
/// openers are reported at the end of the scan.
pub fn check_structure(tokens: &[Token]) -> Vec<StructureDiagnostic> {
    let mut out = Vec::new();
    let significant: Vec<&Token> = tokens.iter().filter(|t| !t.is_trivia()).collect();
    check_header(&significant, tokens, &mut out);

    let mut brackets = BracketStack::default();
    let mut proofs: Vec<SourceRange> = Vec::new();
    let mut blocks: Vec<SourceRange> = Vec::new();
    for token in tokens {
        match token.class {
            TokenClass::Comment if !token.is_terminated() => out.push(StructureDiagnostic::new(
                StructureCode::UnclosedComment,
                token.range,
                "comment is never closed",
            )),
            TokenClass::StringLiteral | TokenClass::Cartouche => {
                if token.is_terminated() {
                    check_inner_brackets(token, &mut out);
                } else {
                    let what = if token.class == TokenClass::Cartouche {
                        "cartouche"
                    } else {
                        "string literal"
                    };
                    out.push(StructureDiagnostic::new(
                        StructureCode::UnclosedString,
                        token.range,
                        format!("{what} is never closed"),
                    ));
                }
            }
            TokenClass::Symbol => {
                let mut chars = token.text.chars();
                if let (Some(c), None) = (chars.next(), chars.next()) {
                    brackets.push_char(c, token.range, &mut out);
                }
            }
            TokenClass::CommandKeyword => match token.text.as_str() {
                "proof" => proofs.push(token.range),
                "qed" => {
                    if proofs.pop().is_none() {
                        out.push(StructureDiagnostic::new(
                            StructureCode::QedWithoutProof,
                            token.range,
                            "`qed` without an open `proof`",
                        ));
                    }
                }
                "oops" => proofs.clear(),
                "begin" => blocks.push(token.range),
                "end" => {
                    if blocks.pop().is_none() {
                        out.push(StructureDiagnostic::new(
                            StructureCode::UnbalancedBlock,
                            token.range,
                            "`end` without an open `begin`",
                        ));
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }
    // A comment or literal that runs to the end of the file hides whatever
    // would have closed the open brackets and blocks; reporting those too
    // would only repeat the same mistake.
    if tokens.last().is_some_and(|t| !t.is_terminated()) {
        return out;
    }
    brackets.finish(&mut out);
    for range in proofs {
        out.push(StructureDiagnostic::new(
            StructureCode::ProofWithoutQed,
            range,
            "`proof` is never closed by `qed`",
        ));
    }
    for range in blocks {
        out.push(StructureDiagnostic::new(
            StructureCode::UnbalancedBlock,
            range,
            "`begin` is never closed by `end`",
        ));
    }
    out
}

fn check_header(significant: &[&Token], all: &[Token], out: &mut Vec<StructureDiagnostic>) {
    let Some(first) = significant.first() else {
        let range = all
            .first()
            .map_or(SourceRange::point(1, 0), |t| t.range);
        out.push(StructureDiagnostic::new(
            StructureCode::MissingTheoryHeader,
            range,
            "expected `theory NAME imports ... begin`",
        ));
        return;
    };
    if !first.is_command("theory") {
        out.push(StructureDiagnostic::new(
            StructureCode::MissingTheoryHeader,
            first.range,
            "a theory must start with `theory NAME imports ... begin`",
        ));
        return;
    }
    let name_ok = significant
        .get(1)
        .is_some_and(|t| matches!(t.class, TokenClass::Identifier | TokenClass::StringLiteral));
    let begin = significant.iter().position(|t| t.is_command("begin"));
    let imports = significant
        .iter()
        .position(|t| t.class == TokenClass::InnerKeyword && t.text == "imports");
    let message = match (name_ok, imports, begin) {
        (false, _, _) => Some("`theory` must be followed by the theory name"),
        (_, _, None) => Some("theory header lacks `begin`"),
        (_, None, _) => Some("theory header lacks `imports`"),
        (_, Some(i), Some(b)) if i > b => Some("`imports` must come before `begin`"),
        _ => None,
    };
    if let Some(message) = message {
        out.push(StructureDiagnostic::new(
            StructureCode::MissingTheoryHeader,
            first.range,
            message,
        ));
    }
}

/// Fold regions: one per multi-line `proof`…`qed` pair and one per nested
/// `begin`…`end` block (the theory body itself is not folded). Sorted by
/// start line, outer regions before the regions they contain.
pub fn fold_regions(tokens: &[Token]) -> Vec<(u32, u32)> {
    let mut regions = Vec::new();
    let mut proofs: Vec<u32> = Vec::new();
    let mut blocks: Vec<u32> = Vec::new();
    for token in tokens.iter().filter(|t| t.class == TokenClass::CommandKeyword) {
        match token.text.as_str() {
            "proof" => proofs.push(token.range.line),
            "qed" => {
                if let Some(start) = proofs.pop() {
                    regions.push((start, token.range.end_line));
                }
            }
            "oops" => proofs.clear(),
            "begin" => blocks.push(token.range.line),
            "end" => {
                if let Some(start) = blocks.pop() {
                    if !blocks.is_empty() {
                        regions.push((start, token.range.end_line));
                    }
                }
            }
            _ => {}
        }
    }
    regions.retain(|(s, e)| e > s);
    regions.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    regions
}

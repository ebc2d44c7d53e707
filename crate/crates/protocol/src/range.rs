use std::fmt;

use serde::{Deserialize, Serialize};

/// A span of source text. Lines are 1-based, columns are 0-based and counted
/// in Unicode scalar values. The end position is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceRange {
    pub line: u32,
    pub column: u32,
    pub end_line: u32,
    pub end_column: u32,
}

impl SourceRange {
    pub fn new(line: u32, column: u32, end_line: u32, end_column: u32) -> Self {
        Self {
            line,
            column,
            end_line,
            end_column,
        }
    }

    /// An empty range at a single position.
    pub fn point(line: u32, column: u32) -> Self {
        Self::new(line, column, line, column)
    }

    pub fn start(&self) -> (u32, u32) {
        (self.line, self.column)
    }

    pub fn end(&self) -> (u32, u32) {
        (self.end_line, self.end_column)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &SourceRange) -> bool {
        self.start() <= other.start() && other.end() <= self.end()
    }

    pub fn overlaps(&self, other: &SourceRange) -> bool {
        self.start() < other.end() && other.start() < self.end()
    }

    /// Whether the range lies within a text, i.e. every position it names exists.
    pub fn fits(&self, text: &str) -> bool {
        if self.line == 0 || self.end() < self.start() {
            return false;
        }
        let lines: Vec<&str> = text.split('\n').collect();
        let width = |line: u32| -> Option<u32> {
            lines
                .get(line as usize - 1)
                .map(|l| l.chars().count() as u32)
        };
        matches!(width(self.line), Some(w) if self.column <= w)
            && matches!(width(self.end_line), Some(w) if self.end_column <= w)
    }
}

impl fmt::Display for SourceRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}",
            self.line, self.column, self.end_line, self.end_column
        )
    }
}

/// Range covering the whole of a 1-based line of `text`, or `None` if the line
/// does not exist.
pub fn line_range(text: &str, line: u32) -> Option<SourceRange> {
    if line == 0 {
        return None;
    }
    let content = text.split('\n').nth(line as usize - 1)?;
    let content = content.strip_suffix('\r').unwrap_or(content);
    Some(SourceRange::new(
        line,
        0,
        line,
        content.chars().count() as u32,
    ))
}

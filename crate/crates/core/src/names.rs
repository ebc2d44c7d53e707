//! Validation of names that end up in file paths.

use std::sync::LazyLock;

use regex::Regex;

static SEGMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z0-9][A-Za-z0-9_-]{0,63}$").unwrap());
static THEORY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z][A-Za-z0-9_']{0,63}$").unwrap());

/// Activity and user ids: safe as a single path component.
pub fn is_valid_segment(s: &str) -> bool {
    SEGMENT.is_match(s)
}

/// Isabelle theory names.
pub fn is_valid_theory_name(s: &str) -> bool {
    THEORY.is_match(s)
}

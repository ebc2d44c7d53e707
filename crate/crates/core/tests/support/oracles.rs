//! Brute-force reference implementations, written without the library's
//! lexer or analyzer, plus a deterministic synthetic event log.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proofdesk_core::diagnostic::{Diagnostic, DiagnosticSource, Severity};
use proofdesk_core::telemetry::{CheckEvent, EventKind, NewEvent, TelemetryStore, Timestamp};
use proofdesk_core::SourceRange;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const AUTOMATION: [&str; 4] = ["auto", "simp", "arith", "blast"];

/// (range, rule id) of every automatic tactic name outside comments,
/// strings, cartouches and `\<...>` symbols.
pub fn lint_oracle(text: &str) -> Vec<(SourceRange, String)> {
    let hidden = hidden_bytes(text);
    let word = regex::Regex::new(
        r"[\p{Alphabetic}_][\p{Alphabetic}\p{N}_']*(?:\.\p{Alphabetic}[\p{Alphabetic}\p{N}_']*)*",
    )
    .unwrap();
    let mut out = Vec::new();
    let mut start = 0;
    while start < text.len() {
        if hidden[start] {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < text.len() && !hidden[end] {
            end += 1;
        }
        for m in word.find_iter(&text[start..end]) {
            if AUTOMATION.contains(&m.as_str()) {
                let (l0, c0) = line_col(text, start + m.start());
                let (l1, c1) = line_col(text, start + m.end());
                out.push((
                    SourceRange::new(l0, c0, l1, c1),
                    format!("no-automation.{}", m.as_str()),
                ));
            }
        }
        start = end;
    }
    out
}

fn line_col(text: &str, byte: usize) -> (u32, u32) {
    let before = &text[..byte];
    let line = before.matches('\n').count() as u32 + 1;
    let col = before.rsplit('\n').next().unwrap().chars().count() as u32;
    (line, col)
}

/// Marks every byte that sits inside a comment, string, cartouche or symbol.
fn hidden_bytes(text: &str) -> Vec<bool> {
    let b = text.as_bytes();
    let mut hidden = vec![false; b.len()];
    let mut i = 0;
    while i < b.len() {
        let rest = &text[i..];
        let end = if rest.starts_with("(*") {
            let mut depth = 0;
            let mut j = i;
            loop {
                if j >= b.len() {
                    break b.len();
                }
                if text[j..].starts_with("(*") {
                    depth += 1;
                    j += 2;
                } else if text[j..].starts_with("*)") {
                    depth -= 1;
                    j += 2;
                    if depth == 0 {
                        break j;
                    }
                } else {
                    j += 1;
                }
            }
        } else if rest.starts_with('"') || rest.starts_with('`') {
            let q = b[i];
            let mut j = i + 1;
            loop {
                if j >= b.len() {
                    break b.len();
                }
                if b[j] == b'\\' {
                    j += 2;
                } else if b[j] == q {
                    break j + 1;
                } else {
                    j += 1;
                }
            }
            .min(b.len())
        } else if rest.starts_with('‹') || rest.starts_with("\\<open>") {
            let mut depth = 0;
            let mut j = i;
            loop {
                if j >= b.len() {
                    break b.len();
                }
                let r = &text[j..];
                if r.starts_with('‹') {
                    depth += 1;
                    j += '‹'.len_utf8();
                } else if r.starts_with("\\<open>") {
                    depth += 1;
                    j += 7;
                } else if r.starts_with('›') || r.starts_with("\\<close>") {
                    depth -= 1;
                    j += if r.starts_with('›') { '›'.len_utf8() } else { 8 };
                    if depth == 0 {
                        break j;
                    }
                } else {
                    j += 1;
                }
            }
        } else if let Some(m) = regex::Regex::new(r"^\\<[A-Za-z0-9_^]+>").unwrap().find(rest) {
            i + m.end()
        } else {
            i += 1;
            continue;
        };
        for h in &mut hidden[i..end] {
            *h = true;
        }
        i = end;
    }
    hidden
}

// Analytics oracles.

const KEYWORDS: [(&str, &str); 10] = [
    ("type unification failed", "type-level"),
    ("type error", "type-level"),
    ("failed to apply", "tactic-level"),
    ("failed to finish proof", "tactic-level"),
    ("undefined", "syntactic"),
    ("inner syntax error", "syntactic"),
    ("outer syntax error", "syntactic"),
    ("parse error", "syntactic"),
    ("inner lexical error", "syntactic"),
    ("malformed", "syntactic"),
];

pub fn category(d: &Diagnostic) -> &'static str {
    match d.source {
        DiagnosticSource::Structure => "syntactic",
        DiagnosticSource::Linter => "tactic-level",
        DiagnosticSource::Prover => {
            let m = d.message.to_lowercase();
            KEYWORDS
                .iter()
                .find(|(k, _)| m.contains(k))
                .map_or("other", |(_, c)| c)
        }
    }
}

/// The only expected statement in the demo activity, as the generator
/// writes it.
pub const CONJ_STATEMENT: &str = "\"A ∧ B ⟹ B ∧ A\"";

fn semantic_misses(activity: &str, theory: &str, content: &str) -> usize {
    usize::from(activity == "demo" && theory.starts_with("Conj") && !content.contains(CONJ_STATEMENT))
}

fn feedback(e: &CheckEvent) -> bool {
    matches!(e.kind, EventKind::ResultReceived | EventKind::StructureRejected)
}

fn submission<'a>(events: &'a [CheckEvent], e: &CheckEvent) -> Option<&'a CheckEvent> {
    events.iter().find(|s| {
        s.kind == EventKind::CheckSubmitted && s.user == e.user && s.check_id == e.check_id
    })
}

/// One (event, theory) observation.
#[derive(Debug, Clone)]
pub struct Obs {
    pub user: String,
    pub activity: String,
    pub theory: String,
    pub key: (Timestamp, u64),
    pub shown: BTreeSet<&'static str>,
    pub mistakes: BTreeSet<&'static str>,
    pub counts: BTreeMap<&'static str, usize>,
}

pub fn observations(events: &[CheckEvent]) -> Vec<Obs> {
    let mut out = Vec::new();
    for e in events.iter().filter(|e| feedback(e)) {
        let snap: Vec<(String, String)> = submission(events, e)
            .map(|s| {
                s.theory_snapshot
                    .iter()
                    .map(|t| (t.name.clone(), t.content.clone()))
                    .collect()
            })
            .unwrap_or_default();
        let mut names: Vec<String> = snap.iter().map(|(n, _)| n.clone()).collect();
        for d in &e.diagnostics {
            if let Some(t) = &d.theory {
                if !names.contains(t) {
                    names.push(t.clone());
                }
            }
        }
        if names.is_empty() {
            names.push(String::new());
        }
        for name in &names {
            let mut o = Obs {
                user: e.user.clone(),
                activity: e.activity.clone(),
                theory: name.clone(),
                key: (e.timestamp, e.event_id),
                shown: BTreeSet::new(),
                mistakes: BTreeSet::new(),
                counts: BTreeMap::new(),
            };
            for d in &e.diagnostics {
                let owner = d.theory.clone().unwrap_or_else(|| names[0].clone());
                if &owner != name {
                    continue;
                }
                let c = category(d);
                o.shown.insert(c);
                if d.severity == Severity::Error {
                    o.mistakes.insert(c);
                }
                *o.counts.entry(c).or_default() += 1;
            }
            if let Some((_, content)) = snap.iter().find(|(n, _)| n == name) {
                let miss = semantic_misses(&e.activity, name, content);
                if miss > 0 {
                    o.mistakes.insert("semantic");
                    *o.counts.entry("semantic").or_default() += miss;
                }
            }
            out.push(o);
        }
    }
    out
}

/// Category totals over the events accepted by `keep`.
pub fn rank(events: &[CheckEvent], keep: impl Fn(&Obs) -> bool) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::new();
    for o in observations(events).iter().filter(|o| keep(o)) {
        for (c, n) in &o.counts {
            *counts.entry(*c).or_default() += n;
        }
    }
    counts
}

/// (message, mistake) -> (shown, disappeared), by searching each
/// observation's successor among all observations.
pub fn association(events: &[CheckEvent]) -> BTreeMap<(&'static str, &'static str), (usize, usize)> {
    let obs = observations(events);
    let mut cells = BTreeMap::new();
    for a in &obs {
        let next = obs
            .iter()
            .filter(|b| {
                b.user == a.user && b.activity == a.activity && b.theory == a.theory && b.key > a.key
            })
            .min_by_key(|b| b.key);
        let Some(next) = next else { continue };
        for m in &a.shown {
            for k in &a.mistakes {
                let cell: &mut (usize, usize) = cells.entry((*m, *k)).or_default();
                cell.0 += 1;
                if !next.mistakes.contains(k) {
                    cell.1 += 1;
                }
            }
        }
    }
    cells
}

fn active(mut times: Vec<i64>, threshold_ms: i64) -> i64 {
    times.sort();
    let mut total = 0;
    for i in 1..times.len() {
        let gap = times[i] - times[i - 1];
        if threshold_ms == 0 || gap <= threshold_ms {
            total += gap;
        }
    }
    total
}

/// (total checks, active milliseconds).
pub fn frequency(events: &[CheckEvent], user: &str, threshold_ms: i64) -> (usize, i64) {
    let times: Vec<i64> = events
        .iter()
        .filter(|e| e.user == user && e.kind == EventKind::CheckSubmitted)
        .map(|e| e.timestamp.millis())
        .collect();
    (times.len(), active(times.clone(), threshold_ms))
}

/// Exercise id -> duration for the demo activity, exercises matched by
/// their theory-name prefix.
pub fn durations(events: &[CheckEvent], user: &str, threshold_ms: i64) -> Vec<(String, i64)> {
    let exercises = [("conj-swap", "Conj"), ("disj-swap", "Disj"), ("impl", "Impl")];
    let subs: Vec<&CheckEvent> = events
        .iter()
        .filter(|e| e.user == user && e.activity == "demo" && e.kind == EventKind::CheckSubmitted)
        .collect();
    let touches = |e: &CheckEvent, prefix: &str| e.theory_snapshot.iter().any(|t| t.name.starts_with(prefix));
    let mut spans = Vec::new();
    for (id, prefix) in exercises {
        let times: Vec<i64> = subs
            .iter()
            .filter(|e| touches(e, prefix))
            .map(|e| e.timestamp.millis())
            .collect();
        if let (Some(first), Some(last)) = (times.iter().min(), times.iter().max()) {
            spans.push((id, *first, *last));
        }
    }
    let mut out = Vec::new();
    for (i, (id, first, last)) in spans.iter().enumerate() {
        let end = spans.get(i + 1).map_or(*last, |s| s.1);
        let window: Vec<i64> = subs
            .iter()
            .map(|e| e.timestamp.millis())
            .filter(|t| *t >= *first && *t <= end)
            .collect();
        out.push((id.to_string(), active(window, threshold_ms)));
    }
    out
}

// Synthetic log.

pub const USERS: [&str; 5] = ["ada", "ben", "cyd", "dee", "eli"];

const PROVER_MESSAGES: [(&str, Severity); 9] = [
    ("Type unification failed: Clash of types \"bool\" and \"nat\"", Severity::Error),
    ("Failed to apply initial proof method", Severity::Error),
    ("Failed to finish proof", Severity::Error),
    ("Undefined fact: \"conjI2\"", Severity::Error),
    ("Inner syntax error at \"∧ B\"", Severity::Error),
    ("Some proof obligations remain unsolved", Severity::Error),
    ("Introduced fixed type variable(s): 'a", Severity::Warning),
    ("Ignoring duplicate rule", Severity::Warning),
    ("proof state: goal (1 subgoal)", Severity::Info),
];

fn theory_text(name: &str, good: bool) -> String {
    let statement = if good { CONJ_STATEMENT } else { "\"A ∧ B ⟹ A\"" };
    format!("theory {name}\n  imports Main\nbegin\n\nlemma {statement}\n  apply (rule conjI)\n  done\n\nend\n")
}

/// Records exactly `n` events (n ≥ 2) into `store`, starting at `t0`.
/// Timestamps per user never go backwards; gaps include long breaks.
pub fn synthetic_log(store: &TelemetryStore, seed: u64, n: usize, t0: i64) -> Vec<u64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut clock = t0;
    let mut ids = Vec::new();
    let mut check = 0;
    let sets: [&[&str]; 5] = [&["Conj1"], &["Disj1"], &["Impl1"], &["Conj1", "Disj1"], &["Conj2"]];
    while ids.len() < n {
        let user = USERS[rng.random_range(0..USERS.len())];
        let gap_min = match rng.random_range(0..10) {
            0 => rng.random_range(16..60),
            1 => 15,
            _ => rng.random_range(0..10),
        };
        clock += gap_min * 60_000 + rng.random_range(0..60_000);
        check += 1;
        let check_id = format!("c{check}");
        let names = sets[rng.random_range(0..sets.len())];
        let mut event = NewEvent::new(user, "demo", EventKind::CheckSubmitted)
            .check_id(&check_id)
            .at(Timestamp::from_millis(clock));
        for name in names {
            event = event.snapshot(*name, theory_text(name, rng.random_bool(0.5)));
        }
        ids.push(store.record_event(event).unwrap());
        if ids.len() == n {
            break;
        }
        clock += rng.random_range(100..5_000);
        let structural = rng.random_bool(0.2);
        let mut diags = Vec::new();
        for _ in 0..rng.random_range(0..4) {
            let theory = if rng.random_bool(0.8) {
                Some(names[rng.random_range(0..names.len())].to_owned())
            } else {
                None
            };
            let d = if structural {
                Diagnostic {
                    source: DiagnosticSource::Structure,
                    severity: Severity::Error,
                    rule_id: Some("proof-without-qed".into()),
                    message: "proof without qed".into(),
                    range: Some(SourceRange::new(5, 2, 5, 7)),
                    theory,
                }
            } else if rng.random_bool(0.2) {
                Diagnostic {
                    source: DiagnosticSource::Linter,
                    severity: Severity::Warning,
                    rule_id: Some("no-automation.auto".into()),
                    message: "`auto` is not allowed in this activity".into(),
                    range: Some(SourceRange::new(6, 8, 6, 12)),
                    theory,
                }
            } else {
                let (message, severity) = PROVER_MESSAGES[rng.random_range(0..PROVER_MESSAGES.len())];
                Diagnostic {
                    source: DiagnosticSource::Prover,
                    severity,
                    rule_id: None,
                    message: message.into(),
                    range: rng.random_bool(0.7).then(|| SourceRange::new(6, 2, 6, 20)),
                    theory,
                }
            };
            diags.push(d);
        }
        let kind = if structural {
            EventKind::StructureRejected
        } else {
            EventKind::ResultReceived
        };
        let event = NewEvent::new(user, "demo", kind)
            .check_id(&check_id)
            .diagnostics(diags)
            .at(Timestamp::from_millis(clock));
        ids.push(store.record_event(event).unwrap());
    }
    ids
}

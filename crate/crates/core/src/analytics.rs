//! Study measures over a check-event log: mistake ranking, message/mistake
//! association, check frequency and time per exercise.
//!
//! Everything here is a pure function of a slice of events, so the same
//! numbers come out of a live store and of an exported file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::activity::{demo_activity, load_activities, ActivityConfig, ConfigError};
use crate::diagnostic::{Diagnostic, DiagnosticSource};
use crate::isar::{tokenize, TokenClass};
use crate::telemetry::{sort_events, CheckEvent, EventKind, Timestamp};

pub const DEFAULT_IDLE_THRESHOLD: Duration = Duration::from_secs(15 * 60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MistakeCategory {
    Syntactic,
    TypeLevel,
    TacticLevel,
    Semantic,
    Other,
}

impl MistakeCategory {
    pub const ALL: [Self; 5] = [
        Self::Syntactic,
        Self::TypeLevel,
        Self::TacticLevel,
        Self::Semantic,
        Self::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Syntactic => "syntactic",
            Self::TypeLevel => "type-level",
            Self::TacticLevel => "tactic-level",
            Self::Semantic => "semantic",
            Self::Other => "other",
        }
    }
}

impl std::fmt::Display for MistakeCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    /// Matched case-insensitively as a substring of the message text.
    pub text: String,
    pub category: MistakeCategory,
}

/// Ordered keyword table for prover messages; the first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTable {
    #[serde(rename = "keyword")]
    pub rules: Vec<KeywordRule>,
}

impl Default for KeywordTable {
    fn default() -> Self {
        let rule = |text: &str, category| KeywordRule {
            text: text.into(),
            category,
        };
        use MistakeCategory::*;
        Self {
            rules: vec![
                rule("Type unification failed", TypeLevel),
                rule("Type error", TypeLevel),
                rule("Failed to apply", TacticLevel),
                rule("Failed to finish proof", TacticLevel),
                rule("Undefined", Syntactic),
                rule("Inner syntax error", Syntactic),
                rule("Outer syntax error", Syntactic),
                rule("Parse error", Syntactic),
                rule("Inner lexical error", Syntactic),
                rule("Malformed", Syntactic),
            ],
        }
    }
}

impl KeywordTable {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn lookup(&self, message: &str) -> Option<MistakeCategory> {
        let lower = message.to_lowercase();
        self.rules
            .iter()
            .find(|r| lower.contains(&r.text.to_lowercase()))
            .map(|r| r.category)
    }
}

/// Total: structure diagnostics are syntactic, lint findings are
/// tactic-level, prover messages go through the keyword table.
pub fn categorize(d: &Diagnostic, table: &KeywordTable) -> MistakeCategory {
    match d.source {
        DiagnosticSource::Structure => MistakeCategory::Syntactic,
        DiagnosticSource::Linter => MistakeCategory::TacticLevel,
        DiagnosticSource::Prover => table.lookup(&d.message).unwrap_or(MistakeCategory::Other),
    }
}

/// Shared inputs of all measures.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub keywords: KeywordTable,
    pub activities: Vec<ActivityConfig>,
    /// Gaps longer than this are breaks; zero counts every gap.
    pub idle_threshold: Duration,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self {
            keywords: KeywordTable::default(),
            activities: Vec::new(),
            idle_threshold: DEFAULT_IDLE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    All,
    Activity,
    User,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Self::All),
            "activity" => Ok(Self::Activity),
            "user" => Ok(Self::User),
            _ => Err(format!("unknown grouping {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: MistakeCategory,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankGroup {
    /// `all`, an activity id or a user id.
    pub group: String,
    pub counts: Vec<CategoryCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRow {
    pub message_category: MistakeCategory,
    pub mistake_category: MistakeCategory,
    pub shown_count: usize,
    pub disappeared_count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssociationTable {
    pub rows: Vec<AssociationRow>,
}

impl AssociationTable {
    pub fn get(
        &self,
        message: MistakeCategory,
        mistake: MistakeCategory,
    ) -> Option<&AssociationRow> {
        self.rows
            .iter()
            .find(|r| r.message_category == message && r.mistake_category == mistake)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckFrequency {
    pub user: String,
    pub total_checks: usize,
    pub active_ms: u64,
    /// Absent when there is no active time to divide by.
    pub checks_per_active_hour: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseDuration {
    pub user: String,
    pub activity: String,
    pub exercise: String,
    pub duration_ms: u64,
}

/// Feedback events are the ones that show the student diagnostics for a
/// submission: prover results and structural rejections.
pub fn is_feedback(e: &CheckEvent) -> bool {
    matches!(e.kind, EventKind::ResultReceived | EventKind::StructureRejected)
}

/// One theory's view of a feedback event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub user: String,
    pub activity: String,
    pub theory: String,
    pub timestamp: Timestamp,
    pub event_id: u64,
    /// Categories of every diagnostic shown for the theory.
    pub shown: BTreeSet<MistakeCategory>,
    /// Categories of error diagnostics plus oracle findings.
    pub mistakes: BTreeSet<MistakeCategory>,
    /// Total diagnostics plus oracle findings, by category.
    pub counts: BTreeMap<MistakeCategory, usize>,
}

impl Analyzer {
    fn activity(&self, id: &str) -> Option<&ActivityConfig> {
        self.activities.iter().find(|a| a.id == id)
    }

    fn counts_gap(&self, gap_ms: i64) -> bool {
        self.idle_threshold.is_zero() || gap_ms as u128 <= self.idle_threshold.as_millis()
    }

    /// Number of expected statements the theory fails to state.
    pub fn semantic_findings(&self, activity: &str, theory: &str, content: &str) -> usize {
        let Some(config) = self.activity(activity) else {
            return 0;
        };
        let Some(exercise) = config.exercises.iter().find(|e| e.matches(theory)) else {
            return 0;
        };
        if exercise.expected_statements.is_empty() {
            return 0;
        }
        let stated: BTreeSet<String> = tokenize(content)
            .into_iter()
            .filter(|t| matches!(t.class, TokenClass::StringLiteral | TokenClass::Cartouche))
            .map(|t| normalize_statement(&t.text))
            .collect();
        exercise
            .expected_statements
            .iter()
            .filter(|s| !stated.contains(&normalize_statement(s)))
            .count()
    }

    /// Splits feedback events into per-theory steps, in log order. The
    /// theories of a check come from its check-submitted snapshot.
    pub fn steps(&self, events: &[CheckEvent]) -> Vec<Step> {
        let mut events = events.to_vec();
        sort_events(&mut events);
        let submissions: HashMap<(&str, &str), &CheckEvent> = events
            .iter()
            .filter(|e| e.kind == EventKind::CheckSubmitted)
            .filter_map(|e| Some(((e.user.as_str(), e.check_id.as_deref()?), e)))
            .collect();
        let mut steps = Vec::new();
        for e in events.iter().filter(|e| is_feedback(e)) {
            let submitted = e
                .check_id
                .as_deref()
                .and_then(|c| submissions.get(&(e.user.as_str(), c)));
            let mut theories: Vec<(String, Option<&str>)> = match submitted {
                Some(s) => s
                    .theory_snapshot
                    .iter()
                    .map(|t| (t.name.clone(), Some(t.content.as_str())))
                    .collect(),
                None => Vec::new(),
            };
            for d in &e.diagnostics {
                if let Some(t) = &d.theory {
                    if !theories.iter().any(|(n, _)| n == t) {
                        theories.push((t.clone(), None));
                    }
                }
            }
            // Diagnostics naming no known theory belong to the first one.
            if theories.is_empty() {
                theories.push((String::new(), None));
            }
            let first = theories[0].0.clone();
            let owner_of = |d: &Diagnostic| match &d.theory {
                Some(t) if theories.iter().any(|(n, _)| n == t) => t.clone(),
                _ => first.clone(),
            };
            let owners: Vec<String> = e.diagnostics.iter().map(owner_of).collect();
            for (theory, content) in &theories {
                let mut step = Step {
                    user: e.user.clone(),
                    activity: e.activity.clone(),
                    theory: theory.clone(),
                    timestamp: e.timestamp,
                    event_id: e.event_id,
                    shown: BTreeSet::new(),
                    mistakes: BTreeSet::new(),
                    counts: BTreeMap::new(),
                };
                for (d, owner) in e.diagnostics.iter().zip(&owners) {
                    if owner != theory {
                        continue;
                    }
                    let c = categorize(d, &self.keywords);
                    step.shown.insert(c);
                    if d.is_error() {
                        step.mistakes.insert(c);
                    }
                    *step.counts.entry(c).or_default() += 1;
                }
                let semantic = content
                    .map_or(0, |c| self.semantic_findings(&e.activity, theory, c));
                if semantic > 0 {
                    step.mistakes.insert(MistakeCategory::Semantic);
                    *step.counts.entry(MistakeCategory::Semantic).or_default() += semantic;
                }
                steps.push(step);
            }
        }
        steps
    }

    /// Category counts over feedback events, descending by count. Totals
    /// equal the number of diagnostics plus oracle findings.
    pub fn rank_mistakes(&self, events: &[CheckEvent], group_by: GroupBy) -> Vec<RankGroup> {
        let mut groups: BTreeMap<String, BTreeMap<MistakeCategory, usize>> = BTreeMap::new();
        for step in self.steps(events) {
            let key = match group_by {
                GroupBy::All => "all".to_owned(),
                GroupBy::Activity => step.activity.clone(),
                GroupBy::User => step.user.clone(),
            };
            let entry = groups.entry(key).or_default();
            for (c, n) in step.counts {
                *entry.entry(c).or_default() += n;
            }
        }
        groups
            .into_iter()
            .filter(|(_, counts)| !counts.is_empty())
            .map(|(group, counts)| {
                let mut counts: Vec<CategoryCount> = counts
                    .into_iter()
                    .map(|(category, count)| CategoryCount { category, count })
                    .collect();
                counts.sort_by(|a, b| b.count.cmp(&a.count).then(a.category.cmp(&b.category)));
                RankGroup { group, counts }
            })
            .collect()
    }

    /// For consecutive steps on the same (user, activity, theory): every
    /// category shown at the first step is paired with every mistake
    /// category present there, and the pair counts as disappeared when the
    /// mistake is gone at the next step.
    pub fn message_mistake_association(&self, events: &[CheckEvent]) -> AssociationTable {
        let mut chains: BTreeMap<(String, String, String), Vec<Step>> = BTreeMap::new();
        for step in self.steps(events) {
            chains
                .entry((step.user.clone(), step.activity.clone(), step.theory.clone()))
                .or_default()
                .push(step);
        }
        let mut cells: BTreeMap<(MistakeCategory, MistakeCategory), (usize, usize)> =
            BTreeMap::new();
        for chain in chains.values() {
            for pair in chain.windows(2) {
                let (now, next) = (&pair[0], &pair[1]);
                for &message in &now.shown {
                    for &mistake in &now.mistakes {
                        let cell = cells.entry((message, mistake)).or_default();
                        cell.0 += 1;
                        if !next.mistakes.contains(&mistake) {
                            cell.1 += 1;
                        }
                    }
                }
            }
        }
        AssociationTable {
            rows: cells
                .into_iter()
                .map(|((message_category, mistake_category), (shown, gone))| AssociationRow {
                    message_category,
                    mistake_category,
                    shown_count: shown,
                    disappeared_count: gone,
                    ratio: gone as f64 / shown as f64,
                })
                .collect(),
        }
    }

    pub fn check_frequency(&self, events: &[CheckEvent], user: &str) -> CheckFrequency {
        let mut times: Vec<Timestamp> = events
            .iter()
            .filter(|e| e.user == user && e.kind == EventKind::CheckSubmitted)
            .map(|e| e.timestamp)
            .collect();
        times.sort();
        let active_ms = self.active_ms(&times);
        let total_checks = times.len();
        CheckFrequency {
            user: user.to_owned(),
            total_checks,
            active_ms,
            checks_per_active_hour: (active_ms > 0)
                .then(|| total_checks as f64 / (active_ms as f64 / 3_600_000.0)),
        }
    }

    /// Sum of gaps between consecutive sorted timestamps, leaving out breaks.
    fn active_ms(&self, sorted: &[Timestamp]) -> u64 {
        sorted
            .windows(2)
            .map(|w| w[1].millis() - w[0].millis())
            .filter(|&gap| self.counts_gap(gap))
            .sum::<i64>() as u64
    }

    /// Time per exercise, assuming students move straight from one
    /// exercise to the next. An exercise lasts from its first submission to
    /// the first submission of the next exercise (in configured order) that
    /// has any; the last one ends at its own last submission. Breaks longer
    /// than the idle threshold are not counted.
    pub fn exercise_durations(&self, events: &[CheckEvent], user: &str) -> Vec<ExerciseDuration> {
        let mut by_activity: BTreeMap<&str, Vec<&CheckEvent>> = BTreeMap::new();
        for e in events
            .iter()
            .filter(|e| e.user == user && e.kind == EventKind::CheckSubmitted)
        {
            by_activity.entry(e.activity.as_str()).or_default().push(e);
        }
        let mut out = Vec::new();
        for (activity, mut subs) in by_activity {
            let Some(config) = self.activity(activity) else {
                continue;
            };
            subs.sort_by_key(|e| (e.timestamp, e.event_id));
            let times: Vec<Timestamp> = subs.iter().map(|e| e.timestamp).collect();
            let mut first: Vec<Option<Timestamp>> = vec![None; config.exercises.len()];
            let mut last: Vec<Option<Timestamp>> = vec![None; config.exercises.len()];
            for e in &subs {
                for t in &e.theory_snapshot {
                    if let Some(k) = config.exercise_index(&t.name) {
                        first[k] = Some(first[k].map_or(e.timestamp, |f| f.min(e.timestamp)));
                        last[k] = Some(last[k].map_or(e.timestamp, |l| l.max(e.timestamp)));
                    }
                }
            }
            let present: Vec<usize> = (0..first.len()).filter(|&k| first[k].is_some()).collect();
            for (i, &k) in present.iter().enumerate() {
                let start = first[k].unwrap();
                let end = match present.get(i + 1) {
                    Some(&next) => first[next].unwrap(),
                    None => last[k].unwrap(),
                };
                let window: Vec<Timestamp> = times
                    .iter()
                    .copied()
                    .filter(|t| *t >= start && *t <= end)
                    .collect();
                out.push(ExerciseDuration {
                    user: user.to_owned(),
                    activity: activity.to_owned(),
                    exercise: config.exercises[k].id.clone(),
                    duration_ms: self.active_ms(&window),
                });
            }
        }
        out
    }
}

/// Measures and their report shape, shared by the CLI and the HTTP API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Rank,
    Assoc,
    Freq,
    Durations,
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rank" => Ok(Self::Rank),
            "assoc" => Ok(Self::Assoc),
            "freq" => Ok(Self::Freq),
            "durations" => Ok(Self::Durations),
            _ => Err(format!("unknown measure {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(default)]
    pub user: Option<String>,
    #[serde(default)]
    pub activity: Option<String>,
    #[serde(default)]
    pub group_by: Option<GroupBy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", content = "rows", rename_all = "lowercase")]
pub enum Report {
    Rank(Vec<RankGroup>),
    Assoc(Vec<AssociationRow>),
    Freq(Vec<CheckFrequency>),
    Durations(Vec<ExerciseDuration>),
}

impl Report {
    /// Plain-text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Self::Rank(groups) => {
                if groups.is_empty() {
                    out.push_str("no mistakes recorded\n");
                }
                for g in groups {
                    let _ = writeln!(out, "{}:", g.group);
                    for c in &g.counts {
                        let _ = writeln!(out, "  {:<13} {}", c.category.as_str(), c.count);
                    }
                }
            }
            Self::Assoc(rows) => {
                let _ = writeln!(
                    out,
                    "{:<13} {:<13} {:>6} {:>6} {:>6}",
                    "message", "mistake", "shown", "gone", "ratio"
                );
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{:<13} {:<13} {:>6} {:>6} {:>6.3}",
                        r.message_category.as_str(),
                        r.mistake_category.as_str(),
                        r.shown_count,
                        r.disappeared_count,
                        r.ratio
                    );
                }
            }
            Self::Freq(rows) => {
                let _ = writeln!(out, "{:<20} {:>7} {:>10} {:>10}", "user", "checks", "active", "per hour");
                for r in rows {
                    let rate = r
                        .checks_per_active_hour
                        .map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"));
                    let _ = writeln!(
                        out,
                        "{:<20} {:>7} {:>10} {:>10}",
                        r.user,
                        r.total_checks,
                        format_ms(r.active_ms),
                        rate
                    );
                }
            }
            Self::Durations(rows) => {
                let _ = writeln!(
                    out,
                    "{:<20} {:<20} {:<20} {:>10}",
                    "user", "activity", "exercise", "duration"
                );
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{:<20} {:<20} {:<20} {:>10}",
                        r.user,
                        r.activity,
                        r.exercise,
                        format_ms(r.duration_ms)
                    );
                }
            }
        }
        out
    }
}

fn format_ms(ms: u64) -> String {
    let secs = ms / 1000;
    format!("{}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
}

impl Analyzer {
    /// The demo activity plus `<dir>/activities/*.toml`, and the keyword
    /// table from `<dir>/keywords.toml` when present.
    pub fn from_config_dir(dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut activities = vec![demo_activity()];
        let mut keywords = KeywordTable::default();
        if let Some(dir) = dir {
            for a in load_activities(&dir.join("activities"))? {
                activities.retain(|b| b.id != a.id);
                activities.push(a);
            }
            let path = dir.join("keywords.toml");
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    keywords = KeywordTable::from_toml(&text).map_err(|e| ConfigError::Parse {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(ConfigError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Ok(Self {
            keywords,
            activities,
            ..Self::default()
        })
    }

    /// Runs one measure over the events selected by `query`. Without a
    /// user, frequency and durations are reported for every user present.
    pub fn report(&self, measure: Measure, events: &[CheckEvent], query: &Query) -> Report {
        let selected: Vec<CheckEvent> = events
            .iter()
            .filter(|e| query.user.as_ref().is_none_or(|u| &e.user == u))
            .filter(|e| query.activity.as_ref().is_none_or(|a| &e.activity == a))
            .cloned()
            .collect();
        let users: Vec<String> = match &query.user {
            Some(u) => vec![u.clone()],
            None => selected
                .iter()
                .map(|e| e.user.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        };
        match measure {
            Measure::Rank => {
                Report::Rank(self.rank_mistakes(&selected, query.group_by.unwrap_or(GroupBy::All)))
            }
            Measure::Assoc => Report::Assoc(self.message_mistake_association(&selected).rows),
            Measure::Freq => Report::Freq(
                users
                    .iter()
                    .map(|u| self.check_frequency(&selected, u))
                    .collect(),
            ),
            Measure::Durations => Report::Durations(
                users
                    .iter()
                    .flat_map(|u| self.exercise_durations(&selected, u))
                    .collect(),
            ),
        }
    }
}

const SYMBOL_GLYPHS: &[(&str, &str)] = &[
    ("\\<and>", "∧"),
    ("\\<or>", "∨"),
    ("\\<not>", "¬"),
    ("\\<longrightarrow>", "⟶"),
    ("\\<Longrightarrow>", "⟹"),
    ("\\<longleftrightarrow>", "⟷"),
    ("\\<forall>", "∀"),
    ("\\<exists>", "∃"),
    ("\\<lbrakk>", "⟦"),
    ("\\<rbrakk>", "⟧"),
    ("\\<equiv>", "≡"),
    ("\\<noteq>", "≠"),
    ("\\<le>", "≤"),
    ("\\<ge>", "≥"),
    ("\\<in>", "∈"),
    ("\\<Rightarrow>", "⇒"),
    ("\\<lambda>", "λ"),
    ("==>", "⟹"),
    ("-->", "⟶"),
];

/// Statement text with delimiters, whitespace and symbol spelling removed.
pub fn normalize_statement(s: &str) -> String {
    let mut s = s.trim();
    for (open, close) in [("\"", "\""), ("‹", "›"), ("\\<open>", "\\<close>")] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            s = inner;
            break;
        }
    }
    let mut s = s.to_owned();
    for (escape, glyph) in SYMBOL_GLYPHS {
        s = s.replace(escape, glyph);
    }
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::Exercise;
    use crate::diagnostic::Severity;

    fn diag(source: DiagnosticSource, severity: Severity, message: &str) -> Diagnostic {
        Diagnostic {
            source,
            severity,
            rule_id: None,
            message: message.into(),
            range: None,
            theory: Some("T".into()),
        }
    }

    fn prover_error(message: &str) -> Diagnostic {
        diag(DiagnosticSource::Prover, Severity::Error, message)
    }

    struct Log {
        events: Vec<CheckEvent>,
        next: u64,
    }

    impl Log {
        fn new() -> Self {
            Self {
                events: Vec::new(),
                next: 1,
            }
        }

        fn push(&mut self, user: &str, kind: EventKind, minute: i64, check: &str) -> &mut CheckEvent {
            self.events.push(CheckEvent {
                event_id: self.next,
                user: user.into(),
                activity: "demo".into(),
                kind,
                timestamp: Timestamp::from_millis(minute * 60_000),
                check_id: Some(check.into()),
                theory_snapshot: Vec::new(),
                diagnostics: Vec::new(),
                durations: None,
                failure: None,
            });
            self.next += 1;
            self.events.last_mut().unwrap()
        }

        fn check(&mut self, user: &str, minute: i64, theory: &str, diags: Vec<Diagnostic>) {
            let check = format!("c{}", self.next);
            self.push(user, EventKind::CheckSubmitted, minute, &check)
                .theory_snapshot
                .push(crate::telemetry::TheorySnapshot {
                    name: theory.into(),
                    content: String::new(),
                });
            self.push(user, EventKind::ResultReceived, minute, &check).diagnostics = diags;
        }
    }

    #[test]
    fn categorize_defaults() {
        let t = KeywordTable::default();
        let structure = diag(DiagnosticSource::Structure, Severity::Error, "`(` is never closed");
        assert_eq!(categorize(&structure, &t), MistakeCategory::Syntactic);
        assert_eq!(
            categorize(&prover_error("Type unification failed: Clash"), &t),
            MistakeCategory::TypeLevel
        );
        assert_eq!(
            categorize(&prover_error("Failed to finish proof:"), &t),
            MistakeCategory::TacticLevel
        );
        assert_eq!(
            categorize(&prover_error("Undefined fact: \"foo\""), &t),
            MistakeCategory::Syntactic
        );
        assert_eq!(categorize(&prover_error("weird"), &t), MistakeCategory::Other);
    }

    #[test]
    fn keyword_table_from_toml() {
        let t = KeywordTable::from_toml(
            "[[keyword]]\ntext = \"clash\"\ncategory = \"type-level\"\n",
        )
        .unwrap();
        assert_eq!(t.lookup("Clash of types"), Some(MistakeCategory::TypeLevel));
        assert_eq!(t.lookup("Type unification failed"), None);
    }

    #[test]
    fn rank_three_tactic_one_syntactic() {
        let mut log = Log::new();
        log.check("u", 0, "T", vec![prover_error("Failed to apply"), prover_error("Undefined x")]);
        log.check("u", 1, "T", vec![prover_error("Failed to apply")]);
        log.check("v", 2, "T", vec![prover_error("Failed to finish proof")]);
        let a = Analyzer::default();
        let all = a.rank_mistakes(&log.events, GroupBy::All);
        assert_eq!(
            all,
            [RankGroup {
                group: "all".into(),
                counts: vec![
                    CategoryCount { category: MistakeCategory::TacticLevel, count: 3 },
                    CategoryCount { category: MistakeCategory::Syntactic, count: 1 },
                ],
            }]
        );
        let per_user = a.rank_mistakes(&log.events, GroupBy::User);
        let sum: usize = per_user.iter().flat_map(|g| &g.counts).map(|c| c.count).sum();
        assert_eq!(sum, 4);
        assert!(a.rank_mistakes(&[], GroupBy::All).is_empty());
    }

    #[test]
    fn association_single_pairs() {
        let mut log = Log::new();
        log.check("u", 0, "T", vec![prover_error("Failed to apply")]);
        log.check("u", 1, "T", vec![]);
        log.check("v", 0, "T", vec![prover_error("Failed to apply")]);
        log.check("v", 1, "T", vec![prover_error("Failed to apply")]);
        let table = Analyzer::default().message_mistake_association(&log.events);
        let row = table
            .get(MistakeCategory::TacticLevel, MistakeCategory::TacticLevel)
            .unwrap();
        assert_eq!((row.shown_count, row.disappeared_count), (2, 1));
        assert_eq!(row.ratio, 0.5);
    }

    #[test]
    fn frequency_with_break() {
        let mut log = Log::new();
        for minute in [0, 1, 3, 23] {
            log.check("u", minute, "T", vec![]);
        }
        let a = Analyzer::default();
        let f = a.check_frequency(&log.events, "u");
        assert_eq!(f.total_checks, 4);
        assert_eq!(f.active_ms, 3 * 60_000);
        assert_eq!(f.checks_per_active_hour, Some(80.0));
        let none = a.check_frequency(&log.events, "nobody");
        assert_eq!((none.total_checks, none.checks_per_active_hour), (0, None));
    }

    fn three_exercises() -> Analyzer {
        let mut cfg = ActivityConfig::new("demo", "Demo");
        cfg.exercises = vec![
            Exercise::new("e1", "Ex1*"),
            Exercise::new("e2", "Ex2*"),
            Exercise::new("e3", "Ex3*"),
        ];
        Analyzer {
            activities: vec![cfg],
            ..Analyzer::default()
        }
    }

    #[test]
    fn durations_follow_first_events() {
        let mut log = Log::new();
        log.check("u", 0, "Ex1", vec![]);
        log.check("u", 10, "Ex2", vec![]);
        log.check("u", 25, "Ex3", vec![]);
        let d = three_exercises().exercise_durations(&log.events, "u");
        let mins: Vec<_> = d.iter().map(|e| (e.exercise.as_str(), e.duration_ms / 60_000)).collect();
        assert_eq!(mins, [("e1", 10), ("e2", 15), ("e3", 0)]);
    }

    #[test]
    fn durations_single_exercise_and_break() {
        let mut log = Log::new();
        log.check("u", 0, "Ex1", vec![]);
        log.check("u", 8, "Ex1", vec![]);
        let d = three_exercises().exercise_durations(&log.events, "u");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].duration_ms, 8 * 60_000);

        let mut log = Log::new();
        log.check("u", 0, "Ex1", vec![]);
        log.check("u", 5, "Ex1", vec![]);
        log.check("u", 45, "Ex2", vec![]);
        log.check("u", 50, "Ex2", vec![]);
        let a = three_exercises();
        let d = a.exercise_durations(&log.events, "u");
        assert_eq!(d[0].duration_ms, 5 * 60_000);
        assert_eq!(d[1].duration_ms, 5 * 60_000);
        let unbounded = Analyzer {
            idle_threshold: Duration::ZERO,
            ..a
        };
        assert_eq!(unbounded.exercise_durations(&log.events, "u")[0].duration_ms, 45 * 60_000);
    }

    #[test]
    fn semantic_findings_need_oracles() {
        let mut a = three_exercises();
        assert_eq!(a.semantic_findings("demo", "Ex1", "lemma \"B\""), 0);
        a.activities[0].exercises[0].expected_statements = vec!["A ∧ B ⟹ B ∧ A".into()];
        assert_eq!(a.semantic_findings("demo", "Ex1", "lemma \"B ∧ A ⟹ A\""), 1);
        assert_eq!(
            a.semantic_findings("demo", "Ex1", "lemma \"A \\<and> B \\<Longrightarrow> B\\<and>A\""),
            0
        );
    }
}

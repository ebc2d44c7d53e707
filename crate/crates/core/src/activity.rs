//! Per-activity configuration: language restrictions, rule reference,
//! symbol keyboard and exercise order.

use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diagnostic::Severity;

pub type ActivityId = String;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("activity {activity}: {message}")]
    Invalid { activity: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintRuleConfig {
    pub id: String,
    pub pattern: String,
    #[serde(default = "default_severity")]
    pub severity: Severity,
    /// `{match}` and `{rule}` are substituted.
    #[serde(default = "default_message")]
    pub message: String,
}

fn default_severity() -> Severity {
    Severity::Warning
}

fn default_message() -> String {
    "`{match}` is not allowed in this activity".into()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesetConfig {
    /// Names of built-in rule families, e.g. `no-automation`.
    #[serde(default)]
    pub builtins: Vec<String>,
    #[serde(default)]
    pub rules: Vec<LintRuleConfig>,
    /// Reject submissions carrying error-severity lint diagnostics.
    #[serde(default)]
    pub enforce: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub name: String,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleGroup {
    pub group: String,
    #[serde(default)]
    pub entries: Vec<RuleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyboardKey {
    pub glyph: String,
    pub insert: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ExerciseRepr", into = "ExerciseRepr")]
pub struct Exercise {
    pub id: String,
    /// Theory-name pattern; `*` matches any run of characters.
    pub theory: String,
    /// Expected lemma statements. When present, a snapshot that does not
    /// state one of them counts as a semantic mistake.
    pub expected_statements: Vec<String>,
}

impl Exercise {
    pub fn new(id: impl Into<String>, theory: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            theory: theory.into(),
            expected_statements: Vec::new(),
        }
    }

    pub fn matches(&self, theory_name: &str) -> bool {
        glob_regex(&self.theory).is_match(theory_name)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExerciseRepr {
    Pattern(String),
    Full {
        id: Option<String>,
        theory: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        expected_statements: Vec<String>,
    },
}

impl From<ExerciseRepr> for Exercise {
    fn from(repr: ExerciseRepr) -> Self {
        match repr {
            ExerciseRepr::Pattern(p) => Exercise::new(p.clone(), p),
            ExerciseRepr::Full {
                id,
                theory,
                expected_statements,
            } => Exercise {
                id: id.unwrap_or_else(|| theory.clone()),
                theory,
                expected_statements,
            },
        }
    }
}

impl From<Exercise> for ExerciseRepr {
    fn from(e: Exercise) -> Self {
        ExerciseRepr::Full {
            id: Some(e.id),
            theory: e.theory,
            expected_statements: e.expected_statements,
        }
    }
}

pub(crate) fn glob_regex(pattern: &str) -> Regex {
    let body: Vec<String> = pattern.split('*').map(regex::escape).collect();
    Regex::new(&format!("^{}$", body.join(".*"))).expect("escaped glob is a valid regex")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityConfig {
    pub id: ActivityId,
    pub title: String,
    #[serde(default)]
    pub exercises: Vec<Exercise>,
    #[serde(default)]
    pub ruleset: RulesetConfig,
    #[serde(default)]
    pub rule_reference: Vec<RuleGroup>,
    #[serde(default)]
    pub symbol_keyboard: Vec<KeyboardKey>,
    #[serde(default)]
    pub pdf: Option<String>,
    #[serde(default)]
    pub linter_toggle_allowed: bool,
}

impl ActivityConfig {
    pub fn new(id: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            exercises: Vec::new(),
            ruleset: RulesetConfig::default(),
            rule_reference: Vec::new(),
            symbol_keyboard: Vec::new(),
            pdf: None,
            linter_toggle_allowed: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            activity: self.id.clone(),
            message,
        };
        if !crate::names::is_valid_segment(&self.id) {
            return Err(invalid(format!("invalid activity id {:?}", self.id)));
        }
        for group in &self.rule_reference {
            let mut seen = HashSet::new();
            for entry in &group.entries {
                if !seen.insert(entry.name.as_str()) {
                    return Err(invalid(format!(
                        "rule {:?} appears twice in group {:?}",
                        entry.name, group.group
                    )));
                }
            }
        }
        if let Some(key) = self.symbol_keyboard.iter().find(|k| k.insert.is_empty()) {
            return Err(invalid(format!("key {:?} has an empty insertion", key.glyph)));
        }
        let mut ids = HashSet::new();
        for e in &self.exercises {
            if !ids.insert(e.id.as_str()) {
                return Err(invalid(format!("exercise {:?} listed twice", e.id)));
            }
        }
        crate::lint::compile_ruleset(self).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Index of the first exercise whose pattern matches `theory_name`.
    pub fn exercise_index(&self, theory_name: &str) -> Option<usize> {
        self.exercises.iter().position(|e| e.matches(theory_name))
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("activity config serializes")
    }
}

/// Loads every `*.toml` file in `dir`, sorted by activity id.
pub fn load_activities(dir: &Path) -> Result<Vec<ActivityConfig>, ConfigError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(ConfigError::Io {
                path: dir.display().to_string(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| ConfigError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|x| x == "toml") {
            out.push(ActivityConfig::load(&path)?);
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// The built-in propositional-logic activity shipped with the server.
pub fn demo_activity() -> ActivityConfig {
    ActivityConfig::from_toml(DEMO_ACTIVITY, "demo").expect("demo activity is valid")
}

pub const DEMO_ACTIVITY: &str = include_str!("../fixtures/demo.toml");

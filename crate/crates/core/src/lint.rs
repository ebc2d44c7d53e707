//! Activity-specific language restrictions matched against Isar tokens.

use regex::Regex;

use crate::activity::{ActivityConfig, LintRuleConfig};
use crate::diagnostic::{Diagnostic, DiagnosticSource, Severity};
use crate::isar::{tokenize, Token, TokenClass};

/// Tactics the `no-automation` built-in forbids.
pub const AUTOMATIC_TACTICS: [&str; 4] = ["auto", "simp", "arith", "blast"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LintConfigError {
    #[error("rule {rule_id}: invalid pattern{}: {message}", position.map(|p| format!(" at offset {p}")).unwrap_or_default())]
    InvalidPattern {
        rule_id: String,
        position: Option<usize>,
        message: String,
    },
    #[error("unknown built-in rule set {0:?}")]
    UnknownBuiltin(String),
    #[error("rule id {0:?} is used twice")]
    DuplicateRule(String),
}

#[derive(Debug, Clone)]
pub struct LintRule {
    pub id: String,
    pub pattern: Regex,
    pub severity: Severity,
    pub message_template: String,
}

impl LintRule {
    pub fn compile(config: &LintRuleConfig) -> Result<Self, LintConfigError> {
        let pattern = Regex::new(&config.pattern).map_err(|e| LintConfigError::InvalidPattern {
            rule_id: config.id.clone(),
            position: pattern_error_offset(&config.pattern),
            message: first_line(&e.to_string()),
        })?;
        Ok(Self {
            id: config.id.clone(),
            pattern,
            severity: config.severity,
            message_template: config.message.clone(),
        })
    }

    pub fn message_for(&self, matched: &str) -> String {
        self.message_template
            .replace("{match}", matched)
            .replace("{rule}", &self.id)
    }
}

fn first_line(s: &str) -> String {
    s.lines().last().unwrap_or(s).trim().to_owned()
}

/// Byte offset of the syntax error in `pattern`, if the parser can locate it.
fn pattern_error_offset(pattern: &str) -> Option<usize> {
    use regex_syntax::ast::parse::Parser;
    use regex_syntax::hir::translate::Translator;
    match Parser::new().parse(pattern) {
        Err(e) => Some(e.span().start.offset),
        Ok(ast) => Translator::new()
            .translate(pattern, &ast)
            .err()
            .map(|e| e.span().start.offset),
    }
}

/// Expands a built-in rule family into its rule configurations.
pub fn builtin_rules(name: &str) -> Option<Vec<LintRuleConfig>> {
    match name {
        "no-automation" => Some(
            AUTOMATIC_TACTICS
                .iter()
                .map(|t| LintRuleConfig {
                    id: format!("no-automation.{t}"),
                    pattern: format!("^{t}$"),
                    severity: Severity::Warning,
                    message: "automatic tactic `{match}` should not be used in this activity"
                        .into(),
                })
                .collect(),
        ),
        _ => None,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ruleset {
    pub rules: Vec<LintRule>,
    /// Students may switch the linter off for themselves.
    pub student_toggleable: bool,
    /// Error-severity diagnostics block submission.
    pub enforce: bool,
}

impl Ruleset {
    /// Whether linting runs for a student who has (or has not) switched it off.
    pub fn applies(&self, student_disabled: bool) -> bool {
        !(self.student_toggleable && student_disabled)
    }

    pub fn blocks(&self, diagnostics: &[Diagnostic]) -> bool {
        self.enforce
            && diagnostics
                .iter()
                .any(|d| d.source == DiagnosticSource::Linter && d.is_error())
    }
}

pub fn compile_ruleset(config: &ActivityConfig) -> Result<Ruleset, LintConfigError> {
    let mut configs = Vec::new();
    for name in &config.ruleset.builtins {
        configs.extend(
            builtin_rules(name).ok_or_else(|| LintConfigError::UnknownBuiltin(name.clone()))?,
        );
    }
    configs.extend(config.ruleset.rules.iter().cloned());
    let mut rules: Vec<LintRule> = Vec::with_capacity(configs.len());
    for c in &configs {
        if rules.iter().any(|r| r.id == c.id) {
            return Err(LintConfigError::DuplicateRule(c.id.clone()));
        }
        rules.push(LintRule::compile(c)?);
    }
    Ok(Ruleset {
        rules,
        student_toggleable: config.linter_toggle_allowed,
        enforce: config.ruleset.enforce,
    })
}

/// Tokens whose text lint rules see.
pub fn lintable(token: &Token) -> bool {
    !matches!(
        token.class,
        TokenClass::Comment | TokenClass::StringLiteral | TokenClass::Cartouche | TokenClass::Whitespace
    )
}

pub fn lint(text: &str, ruleset: &Ruleset) -> Vec<Diagnostic> {
    lint_tokens(&tokenize(text), ruleset)
}

/// One diagnostic per (token, rule) match, in token order then rule order.
pub fn lint_tokens(tokens: &[Token], ruleset: &Ruleset) -> Vec<Diagnostic> {
    if ruleset.rules.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for token in tokens.iter().filter(|t| lintable(t)) {
        for rule in &ruleset.rules {
            if rule.pattern.is_match(&token.text) {
                out.push(Diagnostic {
                    source: DiagnosticSource::Linter,
                    severity: rule.severity,
                    rule_id: Some(rule.id.clone()),
                    message: rule.message_for(&token.text),
                    range: Some(token.range),
                    theory: None,
                });
            }
        }
    }
    out
}

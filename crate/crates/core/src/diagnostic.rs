use serde::{Deserialize, Serialize};

use proofdesk_protocol::{MessageKind, ProverMessage};

use crate::isar::StructureDiagnostic;
use crate::SourceRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticSource {
    Linter,
    Structure,
    Prover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl From<MessageKind> for Severity {
    fn from(kind: MessageKind) -> Self {
        match kind {
            MessageKind::Error => Self::Error,
            MessageKind::Warning => Self::Warning,
            MessageKind::Info => Self::Info,
        }
    }
}

/// A positioned message shown to the student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub source: DiagnosticSource,
    pub severity: Severity,
    /// Lint rule id or structure code; absent for prover messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub message: String,
    /// Prover messages may come without a position.
    pub range: Option<SourceRange>,
    /// Theory the diagnostic belongs to, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<String>,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    pub fn from_structure(d: &StructureDiagnostic, theory: Option<&str>) -> Self {
        Self {
            source: DiagnosticSource::Structure,
            severity: Severity::Error,
            rule_id: Some(d.code.as_str().to_owned()),
            message: d.message.clone(),
            range: Some(d.range),
            theory: theory.map(str::to_owned),
        }
    }

    pub fn from_prover(m: &ProverMessage) -> Self {
        Self {
            source: DiagnosticSource::Prover,
            severity: m.kind.into(),
            rule_id: None,
            message: m.text.clone(),
            range: m.position,
            theory: Some(m.theory_name.clone()),
        }
    }
}

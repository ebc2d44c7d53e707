pub mod activity;
pub mod analytics;
pub mod diagnostic;
pub mod isar;
pub mod lint;
pub mod names;
pub mod telemetry;
pub mod workspace;

pub use activity::{ActivityConfig, ActivityId};
pub use diagnostic::{Diagnostic, DiagnosticSource, Severity};
pub use proofdesk_protocol::SourceRange;

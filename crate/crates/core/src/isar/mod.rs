//! Isar tokenizer and structural pre-assessment.

mod structure;
mod token;

pub use structure::{check_structure, fold_regions, StructureCode, StructureDiagnostic};
pub use token::{tokenize, Token, TokenClass, COMMAND_KEYWORDS, INNER_KEYWORDS};

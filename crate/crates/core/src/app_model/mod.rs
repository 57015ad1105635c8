//! RailLite front end: parsing, validation and column size accounting.

pub mod ast;
mod lexer;
pub mod parser;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::*;
pub use parser::{parse_syntax, snake_case, table_name};
pub use validate::validate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax { line: u32, col: u32, expected: String, found: String },
    #[error("{location}: unresolved reference `{name}`")]
    UnresolvedReference { name: String, location: Location },
    #[error("{location}: duplicate declaration `{name}`")]
    DuplicateDeclaration { name: String, location: Location },
    #[error("{location}: {message}")]
    Invalid { message: String, location: Location },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnresolvedReference { name: String },
    DuplicateDeclaration { name: String },
    InvalidDeclaration { message: String },
    RouteConflict { target: String, message: String },
    TypeError { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub location: Location,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    pub fn unresolved(name: impl Into<String>, location: Location) -> Self {
        Diagnostic { location, kind: DiagnosticKind::UnresolvedReference { name: name.into() } }
    }

    pub fn duplicate(name: impl Into<String>, location: Location) -> Self {
        Diagnostic { location, kind: DiagnosticKind::DuplicateDeclaration { name: name.into() } }
    }

    pub fn type_error(message: impl Into<String>, location: Location) -> Self {
        Diagnostic { location, kind: DiagnosticKind::TypeError { message: message.into() } }
    }

    pub fn invalid(message: impl Into<String>, location: Location) -> Self {
        Diagnostic { location, kind: DiagnosticKind::InvalidDeclaration { message: message.into() } }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DiagnosticKind::UnresolvedReference { name } => {
                write!(f, "{}: unresolved reference `{name}`", self.location)
            }
            DiagnosticKind::DuplicateDeclaration { name } => {
                write!(f, "{}: duplicate declaration `{name}`", self.location)
            }
            DiagnosticKind::InvalidDeclaration { message } | DiagnosticKind::TypeError { message } => {
                write!(f, "{}: {message}", self.location)
            }
            DiagnosticKind::RouteConflict { target, message } => {
                write!(f, "{}: route conflict for {target}: {message}", self.location)
            }
        }
    }
}

impl From<Diagnostic> for ParseError {
    fn from(d: Diagnostic) -> Self {
        match d.kind {
            DiagnosticKind::UnresolvedReference { name } => {
                ParseError::UnresolvedReference { name, location: d.location }
            }
            DiagnosticKind::DuplicateDeclaration { name } => {
                ParseError::DuplicateDeclaration { name, location: d.location }
            }
            DiagnosticKind::InvalidDeclaration { message }
            | DiagnosticKind::TypeError { message }
            | DiagnosticKind::RouteConflict { message, .. } => ParseError::Invalid { message, location: d.location },
        }
    }
}

/// Parse and validate RailLite source. The first diagnostic (in source
/// order) is returned as the error; use [`parse_syntax`] + [`validate`] to
/// see all of them.
pub fn parse_app(source: &str) -> Result<AppIR, ParseError> {
    let ir = parse_syntax(source)?;
    let mut diags = validate(&ir);
    if diags.is_empty() {
        Ok(ir)
    } else {
        diags.sort();
        Err(diags.swap_remove(0).into())
    }
}

/// Bytes charged for one value of `field`.
///
/// Text columns have no declared size, so the charge comes from the column
/// name: `comment` → 200, `name`/`email`/`url` → 128, anything else 2450.
/// Substrings are matched case-insensitively in that order.
pub fn column_byte_size(field: &FieldDecl) -> u64 {
    match field.kind {
        FieldKind::Int => 4,
        FieldKind::Float => 8,
        FieldKind::Bool => 1,
        FieldKind::Datetime => 8,
        FieldKind::String { max_len } => u64::from(max_len),
        FieldKind::Text => {
            let name = field.name.to_ascii_lowercase();
            if name.contains("comment") {
                200
            } else if ["name", "email", "url"].iter().any(|s| name.contains(s)) {
                128
            } else {
                2450
            }
        }
    }
}

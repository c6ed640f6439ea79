//! Diagnostics produced by parsing and validation.

use serde::Serialize;
use std::fmt;

/// Classes of problems reported against an app description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagKind {
    Syntax,
    UnresolvedIdentifier,
    DuplicateIdentifier,
    IllegalLifecycleCallback,
    InvariantViolation,
}

/// One diagnostic with a source position. Column is 1-based; diagnostics
/// raised against constructed (non-parsed) apps carry line 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagKind, line: usize, col: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            line,
            col,
            message: message.into(),
        }
    }

    /// Diagnostic without a source position (semantic checks on built apps).
    pub fn semantic(kind: DiagKind, message: impl Into<String>) -> Self {
        Diagnostic::new(kind, 0, 0, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{:?}: {}", self.kind, self.message)
        } else {
            write!(f, "{}:{}: {:?}: {}", self.line, self.col, self.kind, self.message)
        }
    }
}

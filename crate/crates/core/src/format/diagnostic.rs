use std::fmt;

use crate::model::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

/// A located message about a model source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    /// Stable identifier such as `E-UNDECLARED`.
    pub code: &'static str,
    pub message: String,
}

impl Diagnostic {
    pub fn error(span: Span, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            line: span.line,
            col: span.col,
            code,
            message: message.into(),
        }
    }

    pub fn warning(span: Span, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(span, code, message)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}[{}]: {}",
            self.line, self.col, self.code, self.message
        )
    }
}

/// Stable diagnostic codes.
pub mod codes {
    pub const SYNTAX: &str = "E-SYNTAX";
    pub const NO_VARS: &str = "E-NOVARS";
    pub const UNDECLARED: &str = "E-UNDECLARED";
    pub const DUPLICATE: &str = "E-DUPLICATE";
    pub const RESERVED: &str = "E-RESERVED";
    pub const DOMAIN: &str = "E-DOMAIN";
    pub const INTERVAL: &str = "E-INTERVAL";
    pub const INTERVAL_REF: &str = "E-INTERVAL-REF";
    pub const INIT: &str = "E-INIT";
    pub const TYPE: &str = "E-TYPE";
    pub const PROB_SUM: &str = "E-PROBSUM";
    pub const PROB_RANGE: &str = "E-PROBRANGE";
    pub const CORNERS: &str = "E-CORNERS";
    pub const TIE: &str = "E-TIE";
    pub const BUILD: &str = "E-BUILD";
}

//! Diagnostics produced by the parser, the checker and external compilers.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A 1-based line/column position plus the byte offset into the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
    #[serde(default)]
    pub offset: usize,
}

impl Pos {
    pub const START: Pos = Pos { line: 1, col: 1, offset: 0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn new(start: Pos, end: Pos) -> Self {
        Span { start, end }
    }

    pub fn point(pos: Pos) -> Self {
        Span { start: pos, end: pos }
    }

    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end }
    }
}

/// The five error classes used for accounting compiler findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorClass {
    Undefined,
    Mismatch,
    Call,
    TypeConversion,
    Other,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 5] = [
        ErrorClass::Undefined,
        ErrorClass::Mismatch,
        ErrorClass::Call,
        ErrorClass::TypeConversion,
        ErrorClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Undefined => "UNDEFINED",
            ErrorClass::Mismatch => "MISMATCH",
            ErrorClass::Call => "CALL",
            ErrorClass::TypeConversion => "TYPE_CONVERSION",
            ErrorClass::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorClass> {
        ErrorClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which part of a unit a finding belongs to. Repair rounds fix
/// declaration findings before implementation findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Section {
    Declaration,
    Implementation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
    pub span: Span,
    pub section: Section,
    pub class: ErrorClass,
}

impl Diagnostic {
    pub fn new(
        class: ErrorClass,
        code: &str,
        section: Section,
        span: Span,
        message: impl Into<String>,
    ) -> Self {
        Diagnostic { code: code.to_string(), message: message.into(), span, section, class }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} [{}] {}: {}",
            self.span.start.line, self.span.start.col, self.class, self.code, self.message
        )
    }
}

/// Per-class counts for a list of diagnostics.
pub fn class_counts(diags: &[Diagnostic]) -> [usize; 5] {
    let mut counts = [0usize; 5];
    for d in diags {
        let idx = ErrorClass::ALL.iter().position(|c| *c == d.class).unwrap();
        counts[idx] += 1;
    }
    counts
}

/// Stable diagnostic codes.
pub mod codes {
    pub const SYNTAX: &str = "syntax.unexpected-token";
    pub const UNCLOSED_BLOCK: &str = "syntax.unclosed-block";
    pub const STRAY_END: &str = "syntax.unmatched-end";
    pub const UNBALANCED_PAREN: &str = "syntax.unbalanced-delimiter";
    pub const MISSING_SEMICOLON: &str = "syntax.missing-semicolon";
    pub const BAD_LITERAL: &str = "syntax.invalid-literal";
    pub const TRAILING: &str = "syntax.trailing-input";

    pub const UNDEFINED_IDENT: &str = "undefined.identifier";
    pub const UNDEFINED_MEMBER: &str = "undefined.member";
    pub const UNDEFINED_LABEL: &str = "undefined.label";
    pub const FAILED_DECL: &str = "undefined.failed-declaration";

    pub const UNKNOWN_CALLEE: &str = "call.unknown-function";
    pub const ARITY: &str = "call.arity";
    pub const UNKNOWN_PARAM: &str = "call.unknown-parameter";
    pub const MISSING_ARG: &str = "call.missing-argument";
    pub const NOT_CALLABLE: &str = "call.not-callable";

    pub const IMPLICIT_CONV: &str = "conversion.implicit";
    pub const BAD_CONV_NAME: &str = "conversion.malformed-name";
    pub const CONDITION_TYPE: &str = "conversion.condition";

    pub const REDEFINITION: &str = "other.redefinition";
    pub const INVALID_TYPE: &str = "other.invalid-user-type";
    pub const INVALID_VARIABLE: &str = "other.invalid-variable";
    pub const UNUSED_LABEL: &str = "other.unused-label";
    pub const UNSUPPORTED: &str = "other.unsupported-construct";
    pub const MISPLACED: &str = "other.misplaced-statement";
    pub const EXTERNAL: &str = "external.diagnostic";
}

//! Structured Text front end: lexer, parser, printer, semantic checker,
//! vendor dialect profiles and compiler adapters.

pub mod ast;
pub mod check;
pub mod compile;
pub mod corpus;
pub mod diag;
pub mod dialect;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod signature;

pub use check::check;
pub use compile::{
    check_source, compile, declaration_end, declaration_region, AdapterError, CompileReport,
    CompilerAdapter, ExternalCompiler,
};
pub use diag::{class_counts, Diagnostic, ErrorClass, Pos, Section, Span};
pub use dialect::{DialectError, DialectProfile, DialectRegistry};
pub use parser::{parse, ParseOutput};
pub use printer::print_unit;
pub use signature::{Direction, ParamSpec, PouKind, Signature, SignatureSource, SignatureTable};

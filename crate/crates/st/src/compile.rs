//! Compiler adapters: the builtin parser + checker, or an external command
//! whose output is read back through the dialect's diagnostic patterns.

use std::io::Write as _;
use std::process::Command;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::check::check;
use crate::dialect::DialectProfile;
use crate::diag::{codes, Diagnostic, ErrorClass, Pos, Section, Span};
use crate::parser::parse;
use crate::signature::SignatureSource;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileReport {
    pub pass: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl CompileReport {
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        CompileReport { pass: diagnostics.is_empty(), diagnostics }
    }
}

/// Infrastructure failure, distinct from a failed compilation.
#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("external compiler `{0}` not found")]
    NotFound(String),
    #[error("failed to run external compiler `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("failed to stage source file: {0}")]
    Io(#[from] std::io::Error),
    #[error("external compiler exited with {status} without parseable diagnostics")]
    Unparseable { status: String, output: String },
    #[error("invalid adapter configuration: {0}")]
    Config(String),
}

/// External compiler invocation. `command` is split on whitespace and any
/// `{source_file}` occurrence is replaced by the path of a temporary file
/// holding the source.
#[derive(Debug)]
pub struct ExternalCompiler {
    pub command: String,
    lock: Mutex<()>,
}

impl ExternalCompiler {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalCompiler { command: command.into(), lock: Mutex::new(()) }
    }
}

#[derive(Debug)]
pub enum CompilerAdapter {
    Builtin,
    External(ExternalCompiler),
}

/// Parses and checks `source`, returning every finding in source order.
pub fn check_source(source: &str, dialect: &DialectProfile, apis: &dyn SignatureSource) -> Vec<Diagnostic> {
    let parsed = parse(source, dialect);
    let mut diags = parsed.diagnostics;
    diags.extend(check(&parsed.unit, dialect, apis));
    diags.sort_by_key(|d| d.span.start.offset);
    diags
}

pub fn compile(
    source: &str,
    adapter: &CompilerAdapter,
    dialect: &DialectProfile,
    apis: &dyn SignatureSource,
) -> Result<CompileReport, AdapterError> {
    match adapter {
        CompilerAdapter::Builtin => Ok(CompileReport::from_diagnostics(check_source(source, dialect, apis))),
        CompilerAdapter::External(ext) => run_external(source, ext, dialect),
    }
}

/// Byte offset where the declaration region ends (after the last END_VAR).
pub fn declaration_end(source: &str, dialect: &DialectProfile) -> Pos {
    parse(source, dialect).unit.decl_end
}

/// The declaration region of `source`: header plus all VAR sections.
pub fn declaration_region<'s>(source: &'s str, dialect: &DialectProfile) -> &'s str {
    let end = declaration_end(source, dialect).offset.min(source.len());
    &source[..end]
}

fn pos_at(source: &str, line: u32, col: u32) -> Pos {
    let mut offset = 0usize;
    let mut cur = 1u32;
    for l in source.split_inclusive('\n') {
        if cur == line {
            let body = l.trim_end_matches(['\n', '\r']);
            let c = (col.max(1) as usize - 1).min(body.len());
            return Pos { line, col: c as u32 + 1, offset: offset + c };
        }
        offset += l.len();
        cur += 1;
    }
    // Past the end: clamp to the last position.
    let last_line = source.lines().count().max(1) as u32;
    let last_col = source.lines().last().map_or(0, |l| l.len()) as u32 + 1;
    Pos { line: last_line, col: last_col, offset: source.len() }
}

fn run_external(source: &str, ext: &ExternalCompiler, dialect: &DialectProfile) -> Result<CompileReport, AdapterError> {
    let patterns = dialect
        .diagnostic_patterns
        .iter()
        .map(|p| Regex::new(&p.regex))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AdapterError::Config(e.to_string()))?;
    let rules = dialect
        .classification_rules
        .iter()
        .map(|r| Regex::new(&format!("(?i){}", r.pattern)).map(|re| (re, r.class)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AdapterError::Config(e.to_string()))?;

    let mut file = tempfile::Builder::new().suffix(".st").tempfile()?;
    file.write_all(source.as_bytes())?;
    file.flush()?;
    let path = file.path().display().to_string();
    let mut parts = ext.command.split_whitespace().map(|p| p.replace("{source_file}", &path));
    let program = parts.next().ok_or_else(|| AdapterError::Config("empty command".into()))?;
    let args: Vec<String> = parts.collect();

    let output = {
        let _guard = ext.lock.lock().unwrap_or_else(|e| e.into_inner());
        Command::new(&program).args(&args).output()
    };
    let output = match output {
        Ok(o) => o,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(AdapterError::NotFound(program)),
        Err(source) => return Err(AdapterError::Spawn { command: program, source }),
    };
    let text = format!(
        "{}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    let decl_line = declaration_end(source, dialect).line;
    let mut diags = Vec::new();
    for line in text.lines() {
        let Some(caps) = patterns.iter().find_map(|re| re.captures(line.trim_end())) else { continue };
        let Some(l) = caps.name("line").and_then(|m| m.as_str().parse::<u32>().ok()) else { continue };
        let c = caps.name("col").and_then(|m| m.as_str().parse::<u32>().ok()).unwrap_or(1);
        let message = caps.name("message").map_or("", |m| m.as_str()).trim().to_string();
        let class = rules
            .iter()
            .find(|(re, _)| re.is_match(&message))
            .map_or(ErrorClass::Other, |(_, c)| *c);
        let pos = pos_at(source, l, c);
        let section = if pos.line <= decl_line { Section::Declaration } else { Section::Implementation };
        diags.push(Diagnostic::new(class, codes::EXTERNAL, section, Span::point(pos), message));
    }
    if diags.is_empty() && !output.status.success() {
        return Err(AdapterError::Unparseable { status: output.status.to_string(), output: text });
    }
    diags.sort_by_key(|d| d.span.start.offset);
    Ok(CompileReport::from_diagnostics(diags))
}

//! One feedback round: compiler diagnostics in, snippet patches out.

use plc_st::{compile, declaration_region, CompileReport, CompilerAdapter, Diagnostic, DialectProfile, Section};
use serde::{Deserialize, Serialize};

use super::patch::{apply_patches, PatchOutcome, PatchSet};
use super::GenError;
use crate::kb::ApiLib;
use crate::llm::{ChatRequest, LlmGateway};
use crate::reply::{ask_with_retry, parse_json, Asked};
use crate::task::Task;
use crate::templates::{TemplateError, Templates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairPrompt {
    pub focus: Section,
    pub diagnostics: Vec<Diagnostic>,
    pub request: ChatRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRound {
    /// 1-based round number.
    pub iteration: u32,
    pub focus: Section,
    pub prompt_diagnostics: Vec<Diagnostic>,
    pub prompt: String,
    pub patches: PatchSet,
    pub outcomes: Vec<PatchOutcome>,
    /// The reply held no usable patch set; the round made no edits.
    pub unparsed: bool,
    pub source: String,
    pub report: CompileReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairState {
    pub iteration: u32,
    pub source: String,
    pub report: CompileReport,
    pub history: Vec<RepairRound>,
}

impl RepairState {
    pub fn new(source: String, report: CompileReport) -> Self {
        RepairState { iteration: 0, source, report, history: Vec::new() }
    }
}

pub struct RepairContext<'a> {
    pub task: &'a Task,
    pub dialect: &'a DialectProfile,
    pub apilib: &'a ApiLib,
    pub compiler: &'a CompilerAdapter,
    pub llm: &'a dyn LlmGateway,
    pub templates: &'a Templates,
    pub max_iterations: u32,
}

fn section_name(s: Section) -> (&'static str, &'static str) {
    match s {
        Section::Declaration => ("declaration", "DECLARATION"),
        Section::Implementation => ("implementation", "IMPLEMENTATION"),
    }
}

/// Declaration findings go first, shown against the declaration part only.
/// Implementation findings are shown against the whole unit.
pub fn repair_prompt(
    task: &Task,
    source: &str,
    report: &CompileReport,
    dialect: &DialectProfile,
    templates: &Templates,
) -> Result<RepairPrompt, TemplateError> {
    let decl: Vec<Diagnostic> =
        report.diagnostics.iter().filter(|d| d.section == Section::Declaration).cloned().collect();
    let (focus, diagnostics, scope, shown) = if decl.is_empty() {
        (Section::Implementation, report.diagnostics.clone(), "Source", source)
    } else {
        (Section::Declaration, decl, "Declaration part of the source", declaration_region(source, dialect))
    };
    let listing: Vec<String> = diagnostics.iter().map(|d| format!("- line {d}")).collect();
    let (section, section_id) = section_name(focus);
    let system = templates.render("repair.system", &[("dialect", &dialect.name)])?;
    let user = templates.render(
        "repair.user",
        &[
            ("name", &task.name),
            ("section", section),
            ("diagnostics", &listing.join("\n")),
            ("scope", scope),
            ("source", shown.trim_end()),
            ("section_id", section_id),
        ],
    )?;
    Ok(RepairPrompt { focus, diagnostics, request: ChatRequest::new("repair", system, user) })
}

/// Runs one round: prompt, parse patches (one retry), apply, recompile.
pub fn repair_round(state: RepairState, ctx: &RepairContext<'_>) -> Result<RepairState, GenError> {
    if state.report.pass {
        return Err(GenError::NothingToRepair("source already compiles".into()));
    }
    if state.iteration >= ctx.max_iterations {
        return Err(GenError::NothingToRepair(format!("iteration budget of {} spent", ctx.max_iterations)));
    }
    let p = repair_prompt(ctx.task, &state.source, &state.report, ctx.dialect, ctx.templates)?;
    let prompt = p.request.user.clone();
    let (patches, unparsed) = match ask_with_retry(ctx.llm, p.request, parse_json::<PatchSet>)? {
        Asked::Parsed(set) => (set, false),
        Asked::Unparsed { error, .. } => {
            tracing::warn!(task = %ctx.task.name, "repair reply unusable, round makes no edits: {error}");
            (PatchSet::default(), true)
        }
    };
    let (source, outcomes) = apply_patches(&state.source, &patches);
    let report = compile(&source, ctx.compiler, ctx.dialect, ctx.apilib)?;
    let iteration = state.iteration + 1;
    let mut history = state.history;
    history.push(RepairRound {
        iteration,
        focus: p.focus,
        prompt_diagnostics: p.diagnostics,
        prompt,
        patches,
        outcomes,
        unparsed,
        source: source.clone(),
        report: report.clone(),
    });
    Ok(RepairState { iteration, source, report, history })
}

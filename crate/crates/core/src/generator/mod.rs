//! Structured prompt assembly, initial generation and the repair loop.

mod patch;
mod pipeline;
mod repair;

use plc_st::DialectProfile;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{ApiEntry, CaseRecord};
use crate::llm::{ChatRequest, LlmError, LlmGateway};
use crate::reply::{first_code_block, retry_message};
use crate::task::{Plan, Task};
use crate::templates::{TemplateError, Templates};

pub use patch::{apply_patches, occurrences, Patch, PatchOutcome, PatchSet, PatchStatus};
pub use pipeline::{
    persist_artifacts, run_pipeline, Ablation, Outcome, PipelineConfig, Resources, StageArtifacts, TaskResult,
};
pub use repair::{repair_prompt, repair_round, RepairContext, RepairPrompt, RepairRound, RepairState};

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no code in the reply after retry")]
    NoCode,
    #[error("nothing to repair: {0}")]
    NothingToRepair(String),
    #[error(transparent)]
    Adapter(#[from] plc_st::AdapterError),
}

/// The generation prompt, kept as blocks so omitted sections are visible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenPrompt {
    pub system: String,
    pub task_block: String,
    pub plan_block: Option<String>,
    pub apis_block: Option<String>,
    pub fewshot_block: Option<String>,
    pub dialect_note: String,
}

impl GenPrompt {
    pub fn user(&self) -> String {
        [Some(&self.task_block), self.plan_block.as_ref(), self.apis_block.as_ref(), self.fewshot_block.as_ref(), Some(&self.dialect_note)]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn request(&self) -> ChatRequest {
        ChatRequest::new("generate", self.system.clone(), self.user())
    }
}

/// Full API description for the prompt: signature line, summary, and one
/// line per described parameter.
pub fn api_text(e: &ApiEntry) -> String {
    let mut s = format!("- {}", e.signature().render());
    let summary = e.index.as_ref().map(|ix| ix.summary.as_str()).unwrap_or(e.description.as_str());
    if !summary.is_empty() {
        s.push_str(&format!("\n  {summary}"));
    }
    for p in e.params.iter().filter(|p| !p.description.is_empty()) {
        s.push_str(&format!("\n  {} {}: {}", p.direction, p.name, p.description));
    }
    s
}

fn dialect_notes(d: &DialectProfile) -> String {
    let mut notes = Vec::new();
    if d.conversion.require_source_type {
        notes.push("Conversions must name source and target type, e.g. INT_TO_REAL; TO_REAL is rejected.");
    }
    if d.extensions.hash_locals {
        notes.push("Local variables may be written with a leading #.");
    }
    if d.extensions.regions {
        notes.push("REGION ... END_REGION may group statements.");
    }
    if d.extensions.variant_type {
        notes.push("The VARIANT type is available for parameters.");
    }
    if d.extensions.begin_block {
        notes.push("The body may start with BEGIN.");
    }
    notes.join("\n")
}

/// Renders the prompt. Sections whose input is empty are left out.
pub fn build_prompt(
    task: &Task,
    plan: Option<&Plan>,
    apis: &[&ApiEntry],
    cases: &[&CaseRecord],
    dialect: &DialectProfile,
    templates: &Templates,
) -> Result<GenPrompt, TemplateError> {
    let system = templates.render("generate.system", &[("dialect", &dialect.name)])?;
    let io = task.io_summary();
    let task_block = templates.render(
        "gen_task",
        &[
            ("unit_kind", task.unit_kind.keyword()),
            ("name", &task.name),
            ("req", task.req.trim()),
            ("io", if io.is_empty() { "(none)" } else { &io }),
        ],
    )?;
    let plan_block = match plan.filter(|p| !p.is_empty()) {
        Some(p) => Some(templates.render("gen_plan", &[("plan", &p.render())])?),
        None => None,
    };
    let apis_block = if apis.is_empty() {
        None
    } else {
        let list: Vec<String> = apis.iter().map(|e| api_text(e)).collect();
        Some(templates.render("gen_apis", &[("apis", &list.join("\n"))])?)
    };
    let fewshot_block = if cases.is_empty() {
        None
    } else {
        let examples: Vec<String> = cases
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let plan = if c.plan.is_empty() { "(none)".to_string() } else { c.plan.render() };
                format!(
                    "### Example {}\nRequirement:\n{}\nPlan:\n{}\nCode:\n```st\n{}\n```",
                    i + 1,
                    c.task.req.trim(),
                    plan,
                    c.code.trim_end()
                )
            })
            .collect();
        Some(templates.render("gen_fewshot", &[("examples", &examples.join("\n\n"))])?)
    };
    let dialect_note = templates.render(
        "gen_dialect",
        &[("dialect_name", &dialect.name), ("dialect_id", &dialect.id), ("notes", &dialect_notes(dialect))],
    )?;
    Ok(GenPrompt { system, task_block, plan_block, apis_block, fewshot_block, dialect_note })
}

fn has_unit_header(text: &str) -> bool {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .any(|w| w.eq_ignore_ascii_case("FUNCTION_BLOCK") || w.eq_ignore_ascii_case("FUNCTION"))
}

/// First fenced block of the reply. Without one, asks again once; a second
/// unfenced reply is used whole only if it contains a unit header.
pub fn generate_initial(prompt: &GenPrompt, llm: &dyn LlmGateway) -> Result<String, GenError> {
    let req = prompt.request();
    let first = llm.complete(&req)?;
    if let Some(code) = first_code_block(&first.text).filter(|c| !c.trim().is_empty()) {
        return Ok(code);
    }
    let retry = ChatRequest { user: retry_message(&req.user, "no fenced code block found"), ..req };
    let second = llm.complete(&retry)?;
    if let Some(code) = first_code_block(&second.text).filter(|c| !c.trim().is_empty()) {
        return Ok(code);
    }
    let whole = second.text.trim();
    if has_unit_header(whole) {
        return Ok(whole.to_string());
    }
    Err(GenError::NoCode)
}

#[cfg(test)]
mod tests {
    use plc_st::{DialectRegistry, Direction, ParamSpec, PouKind};

    use super::*;
    use crate::kb::parse_apilib;
    use crate::llm::{Completion, FnGateway, Usage};

    fn task() -> Task {
        Task {
            name: "Copy".into(),
            req: "Copy a block".into(),
            io: vec![ParamSpec::new("buf", "Variant", Direction::InOut)],
            unit_kind: PouKind::FunctionBlock,
            vendor_target: "siemens_scl".into(),
        }
    }

    fn case(id: &str) -> CaseRecord {
        CaseRecord {
            id: id.into(),
            task: Task { name: id.into(), ..task() },
            plan: Plan::linear(vec![format!("plan {id}")]),
            code: format!("FUNCTION_BLOCK {id}\nEND_FUNCTION_BLOCK"),
            apis: vec![],
        }
    }

    #[test]
    fn ablated_prompt_has_only_task_and_dialect() {
        let d = DialectRegistry::builtin().get("siemens_scl").unwrap();
        let p = build_prompt(&task(), None, &[], &[], &d, &Templates::default()).unwrap();
        assert!(p.plan_block.is_none() && p.apis_block.is_none() && p.fewshot_block.is_none());
        assert_eq!(p.user(), format!("{}\n\n{}", p.task_block, p.dialect_note));
    }

    #[test]
    fn fewshot_order_and_api_signature() {
        let d = DialectRegistry::builtin().get("siemens_scl").unwrap();
        let lib = parse_apilib(
            r#"{"name":"MOVE_BLK_VARIANT","return_type":"INT","params":[{"name":"SRC","type":"VARIANT","direction":"IN"},{"name":"COUNT","type":"UDINT","direction":"IN"},{"name":"DEST","type":"VARIANT","direction":"OUT"}]}"#,
            "t",
        )
        .unwrap();
        let entry = lib.get("MOVE_BLK_VARIANT").unwrap();
        let cases = [case("c4"), case("c1"), case("c2")];
        let refs: Vec<&CaseRecord> = cases.iter().collect();
        let plan = Plan::linear(vec!["copy".into()]);
        let p = build_prompt(&task(), Some(&plan), &[entry], &refs, &d, &Templates::default()).unwrap();
        let few = p.fewshot_block.unwrap();
        assert_eq!(few.matches("### Example").count(), 3);
        let (a, b, c) = (few.find("plan c4").unwrap(), few.find("plan c1").unwrap(), few.find("plan c2").unwrap());
        assert!(a < b && b < c);
        assert!(p.apis_block.unwrap().contains(&entry.signature().render()));
        assert!(p.plan_block.unwrap().contains("1. copy"));
    }

    fn replies(texts: Vec<&'static str>) -> impl LlmGateway {
        let n = std::sync::atomic::AtomicUsize::new(0);
        FnGateway(move |_r: &ChatRequest| {
            let i = n.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(Completion { text: texts[i.min(texts.len() - 1)].to_string(), usage: Usage::default() })
        })
    }

    fn prompt() -> GenPrompt {
        let d = DialectRegistry::builtin().get("siemens_scl").unwrap();
        build_prompt(&task(), None, &[], &[], &d, &Templates::default()).unwrap()
    }

    #[test]
    fn extraction_rules() {
        let one = replies(vec!["Here:\n```scl\nFUNCTION_BLOCK A\nEND_FUNCTION_BLOCK\n```\n"]);
        assert_eq!(generate_initial(&prompt(), &one).unwrap(), "FUNCTION_BLOCK A\nEND_FUNCTION_BLOCK");
        let two = replies(vec!["```\nFIRST\n```\n```\nSECOND\n```"]);
        assert_eq!(generate_initial(&prompt(), &two).unwrap(), "FIRST");
        let prose = replies(vec!["I would write a block.", "Still just words."]);
        assert!(matches!(generate_initial(&prompt(), &prose), Err(GenError::NoCode)));
        let bare = replies(vec!["words", "FUNCTION_BLOCK A\nEND_FUNCTION_BLOCK"]);
        assert_eq!(generate_initial(&prompt(), &bare).unwrap(), "FUNCTION_BLOCK A\nEND_FUNCTION_BLOCK");
    }
}

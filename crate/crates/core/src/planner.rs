//! Task classification and natural-language planning.

use std::collections::{BTreeSet, HashSet};

use plc_st::DialectProfile;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatRequest, LlmError, LlmGateway};
use crate::reply::{ask_with_retry, parse_json, Asked};
use crate::task::{Plan, PlanKind, StateSpec, Task, TransitionSpec};
use crate::templates::{TemplateError, Templates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    ProcessControl,
    GeneralPurpose,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ProcessControl => "PROCESS_CONTROL",
            TaskKind::GeneralPurpose => "GENERAL_PURPOSE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: TaskKind,
    /// The reply never carried a usable label; `kind` is the default.
    pub defaulted: bool,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("plan rejected after retry: {reason}")]
    InvalidPlan { reason: String, raw: String },
}

/// Accepts a reply naming exactly one of the two labels, in any case.
pub fn parse_label(text: &str) -> Result<TaskKind, String> {
    let found: HashSet<TaskKind> = text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter_map(|w| match w.to_ascii_uppercase().as_str() {
            "PROCESS_CONTROL" => Some(TaskKind::ProcessControl),
            "GENERAL_PURPOSE" => Some(TaskKind::GeneralPurpose),
            _ => None,
        })
        .collect();
    match found.len() {
        1 => Ok(found.into_iter().next().unwrap()),
        0 => Err("reply names neither PROCESS_CONTROL nor GENERAL_PURPOSE".into()),
        _ => Err("reply names both labels".into()),
    }
}

pub fn classify_task(
    task: &Task,
    llm: &dyn LlmGateway,
    templates: &Templates,
) -> Result<Classification, PlannerError> {
    let system = templates.render("classify.system", &[])?;
    let io = task.io_summary();
    let user = templates.render(
        "classify.user",
        &[("name", &task.name), ("unit_kind", task.unit_kind.keyword()), ("req", task.req.trim()), ("io", &io)],
    )?;
    Ok(match ask_with_retry(llm, ChatRequest::new("classify", system, user), parse_label)? {
        Asked::Parsed(kind) => Classification { kind, defaulted: false },
        Asked::Unparsed { error, .. } => {
            tracing::warn!(task = %task.name, "classification unusable, assuming GENERAL_PURPOSE: {error}");
            Classification { kind: TaskKind::GeneralPurpose, defaulted: true }
        }
    })
}

const ENGLISH: [&str; 5] = ["AND", "OR", "NOT", "TO", "AT"];

/// Words a natural-language plan must not contain: the dialect's reserved
/// words except those that are also ordinary English.
pub fn code_words(dialect: &DialectProfile) -> BTreeSet<String> {
    dialect.reserved_words.iter().filter(|w| !ENGLISH.contains(&w.as_str())).cloned().collect()
}

/// Checks structure and that every text is prose. Keywords match only as
/// whole, uppercase tokens, so "if the tank is full" is fine and "IF" is not.
pub fn validate_plan(plan: &Plan, code_words: &BTreeSet<String>) -> Result<(), String> {
    match plan.kind {
        PlanKind::Linear => {
            if plan.steps.is_empty() {
                return Err("a linear plan needs at least one step".into());
            }
            if plan.steps.iter().any(|s| s.trim().is_empty()) {
                return Err("empty step".into());
            }
        }
        PlanKind::StateMachine => {
            if plan.states.is_empty() {
                return Err("a state machine needs at least one state".into());
            }
            let mut names = HashSet::new();
            for s in &plan.states {
                if s.name.trim().is_empty() {
                    return Err("state with empty name".into());
                }
                if !names.insert(s.name.to_lowercase()) {
                    return Err(format!("state `{}` declared twice", s.name));
                }
            }
            for t in &plan.transitions {
                for end in [&t.from_state, &t.to_state] {
                    if !names.contains(&end.to_lowercase()) {
                        return Err(format!("transition refers to undeclared state `{end}`"));
                    }
                }
                if t.condition.trim().is_empty() {
                    return Err(format!("transition {} -> {} has no condition", t.from_state, t.to_state));
                }
            }
        }
    }
    for text in plan.texts() {
        if text.contains(":=") {
            return Err(format!("plan text contains code: `{text}`"));
        }
        if let Some(w) = text
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .find(|w| code_words.contains(*w))
        {
            return Err(format!("plan text contains the code keyword `{w}`; describe it in words"));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PlanReply {
    #[serde(default)]
    steps: Vec<String>,
    #[serde(default)]
    states: Vec<StateSpec>,
    #[serde(default)]
    transitions: Vec<TransitionSpec>,
}

fn parse_plan(text: &str, kind: TaskKind, words: &BTreeSet<String>) -> Result<Plan, String> {
    let r: PlanReply = parse_json(text)?;
    let plan = match kind {
        TaskKind::GeneralPurpose => Plan::linear(r.steps),
        TaskKind::ProcessControl => Plan::state_machine(r.states, r.transitions),
    };
    validate_plan(&plan, words)?;
    Ok(plan)
}

/// Process-control tasks get a state machine, others a step list. An
/// invalid reply is retried once with the reason; a second failure is an
/// error carrying the raw reply.
pub fn make_plan(
    task: &Task,
    kind: TaskKind,
    dialect: &DialectProfile,
    llm: &dyn LlmGateway,
    templates: &Templates,
) -> Result<Plan, PlannerError> {
    let words = code_words(dialect);
    let system = templates.render("plan.system", &[("dialect", &dialect.name)])?;
    let io = task.io_summary();
    let vars = [("name", task.name.as_str()), ("req", task.req.trim()), ("io", io.as_str())];
    let user = match kind {
        TaskKind::ProcessControl => templates.render("plan_state_machine.user", &vars)?,
        TaskKind::GeneralPurpose => templates.render("plan_linear.user", &vars)?,
    };
    match ask_with_retry(llm, ChatRequest::new("plan", system, user), |t| parse_plan(t, kind, &words))? {
        Asked::Parsed(plan) => Ok(plan),
        Asked::Unparsed { raw, error } => Err(PlannerError::InvalidPlan { reason: error, raw }),
    }
}

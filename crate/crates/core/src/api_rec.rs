//! API recommendation: three candidate sources, then batched LLM filtering.

use std::collections::BTreeSet;

use plc_st::DialectProfile;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{ApiLib, StoredCase};
use crate::llm::{ChatRequest, LlmError, LlmGateway};
use crate::reply::{ask_with_retry, parse_json, Asked};
use crate::retrieval::{bm25_rank, tokenize, Bm25Doc, Bm25Params};
use crate::task::{Plan, Task};
use crate::templates::{TemplateError, Templates};

pub const PER_QUERY: usize = 5;
pub const BATCH: usize = 15;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCandidateSet {
    pub similarity: BTreeSet<String>,
    pub by_param: BTreeSet<String>,
    pub by_case: BTreeSet<String>,
    pub union: BTreeSet<String>,
    pub filtered: BTreeSet<String>,
}

impl ApiCandidateSet {
    pub fn new(similarity: BTreeSet<String>, by_param: BTreeSet<String>, by_case: BTreeSet<String>) -> Self {
        let union = similarity.iter().chain(&by_param).chain(&by_case).cloned().collect();
        ApiCandidateSet { similarity, by_param, by_case, union, filtered: BTreeSet::new() }
    }

    /// `filtered ⊆ union = similarity ∪ by_param ∪ by_case ⊆ library`.
    pub fn check(&self, apilib: &ApiLib) -> Result<(), String> {
        let expected: BTreeSet<String> =
            self.similarity.iter().chain(&self.by_param).chain(&self.by_case).cloned().collect();
        if expected != self.union {
            return Err("union differs from the three sources".into());
        }
        if let Some(x) = self.filtered.iter().find(|x| !self.union.contains(*x)) {
            return Err(format!("filtered name `{x}` not in union"));
        }
        if let Some(x) = self.union.iter().find(|x| !apilib.contains(x)) {
            return Err(format!("`{x}` is not in the library"));
        }
        Ok(())
    }
}

/// BM25 top five per query over each API's retrieval document, keeping only
/// positive scores.
pub fn lambda_similarity(queries: &[String], apilib: &ApiLib) -> BTreeSet<String> {
    let docs: Vec<Bm25Doc> = apilib.entries().iter().map(|e| Bm25Doc::from_text(e.name.clone(), &e.document())).collect();
    let mut out = BTreeSet::new();
    for q in queries {
        let ranked = bm25_rank(&tokenize(q), &docs, Bm25Params::default());
        out.extend(ranked.into_iter().take(PER_QUERY).filter(|(_, s)| *s > 0.0).map(|(id, _)| id));
    }
    out
}

/// Queries for [`lambda_similarity`]: the plan's texts, or the requirement
/// when there is no plan.
pub fn similarity_queries(task: &Task, plan: Option<&Plan>) -> Vec<String> {
    match plan {
        Some(p) => p.queries(),
        None => vec![task.req.clone()],
    }
}

/// Bare type name: `STRING[20]` -> `STRING`, `ARRAY[1..4] OF DTL` -> `DTL`.
fn base_type(t: &str) -> String {
    let t = t.trim();
    let t = match t.to_ascii_uppercase().rfind(" OF ") {
        Some(i) if t.to_ascii_uppercase().starts_with("ARRAY") => &t[i + 4..],
        _ => t,
    };
    t.split(['[', '(']).next().unwrap_or("").trim().to_ascii_uppercase()
}

/// APIs with a parameter whose type is a complex type that also appears in
/// the task interface. Elementary types never match.
pub fn lambda_par(task: &Task, apilib: &ApiLib, dialect: &DialectProfile) -> BTreeSet<String> {
    let wanted: BTreeSet<String> =
        task.io.iter().map(|p| base_type(&p.type_name)).filter(|t| dialect.is_complex(t)).collect();
    if wanted.is_empty() {
        return BTreeSet::new();
    }
    apilib
        .entries()
        .iter()
        .filter(|e| e.params.iter().any(|p| wanted.contains(&base_type(&p.type_name))))
        .map(|e| e.name.clone())
        .collect()
}

/// APIs used by the selected cases, minus names unknown to the library.
pub fn lambda_simcase(cases: &[&StoredCase]) -> BTreeSet<String> {
    cases.iter().flat_map(|c| c.known_apis()).map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub names: Vec<String>,
    pub kept: Vec<String>,
    /// Reply unusable after retry; the whole batch was kept.
    pub failed: bool,
}

#[derive(Debug, Error)]
pub enum ApiRecError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Splits name-sorted candidates into chunks of at most [`BATCH`].
pub fn batches(candidates: &BTreeSet<String>) -> Vec<Vec<String>> {
    let sorted: Vec<String> = candidates.iter().cloned().collect();
    sorted.chunks(BATCH).map(<[String]>::to_vec).collect()
}

/// Asks the model which candidates to keep, one batch per call. A batch
/// whose reply cannot be parsed after one retry, or whose call fails at the
/// endpoint, is kept whole.
pub fn filter_apis(
    candidates: &BTreeSet<String>,
    task: &Task,
    plan: Option<&Plan>,
    apilib: &ApiLib,
    dialect: &DialectProfile,
    llm: &dyn LlmGateway,
    templates: &Templates,
) -> Result<(BTreeSet<String>, Vec<BatchOutcome>), ApiRecError> {
    let system = templates.render("api_filter.system", &[("dialect", &dialect.name)])?;
    let io = task.io_summary();
    let plan_text = plan.map(|p| format!("\nPlan:\n{}\n", p.render())).unwrap_or_default();
    let mut kept = BTreeSet::new();
    let mut outcomes = Vec::new();
    for names in batches(candidates) {
        let listing: Vec<String> = names.iter().filter_map(|n| apilib.get(n)).map(describe_candidate).collect();
        let user = templates.render(
            "api_filter.user",
            &[
                ("name", &task.name),
                ("req", task.req.trim()),
                ("io", &io),
                ("plan", &plan_text),
                ("candidates", &listing.join("\n")),
            ],
        )?;
        let batch = names.clone();
        let parse = move |t: &str| -> Result<Vec<String>, String> {
            let reply: Vec<String> = parse_json(t)?;
            Ok(batch.iter().filter(|n| reply.iter().any(|r| r.trim().eq_ignore_ascii_case(n))).cloned().collect())
        };
        let outcome = match ask_with_retry(llm, ChatRequest::new("api_filter", system.clone(), user), parse) {
            Ok(Asked::Parsed(k)) => BatchOutcome { names: names.clone(), kept: k, failed: false },
            Ok(Asked::Unparsed { error, .. }) => {
                tracing::warn!(task = %task.name, "API filter reply unusable, keeping batch: {error}");
                BatchOutcome { names: names.clone(), kept: names.clone(), failed: true }
            }
            Err(e) if e.is_endpoint_failure() => {
                tracing::warn!(task = %task.name, "API filter call failed, keeping batch: {e}");
                BatchOutcome { names: names.clone(), kept: names.clone(), failed: true }
            }
            Err(e) => return Err(e.into()),
        };
        kept.extend(outcome.kept.iter().cloned());
        outcomes.push(outcome);
    }
    Ok((kept, outcomes))
}

fn describe_candidate(e: &crate::kb::ApiEntry) -> String {
    let params: Vec<String> = e.params.iter().map(|p| format!("{} {} : {}", p.direction, p.name, p.type_name)).collect();
    let mut s = format!("- {}\n  params: {}", e.name, if params.is_empty() { "(none)".into() } else { params.join("; ") });
    if let Some(rt) = &e.return_type {
        s.push_str(&format!("\n  returns: {rt}"));
    }
    match &e.index {
        Some(ix) => {
            s.push_str(&format!("\n  summary: {}", ix.summary));
            if !ix.scenarios.is_empty() {
                s.push_str(&format!("\n  scenarios: {}", ix.scenarios.join("; ")));
            }
        }
        None => s.push_str(&format!("\n  summary: {}", e.description)),
    }
    s
}

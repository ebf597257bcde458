//! End-to-end run of one task through every stage, with ablation switches.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use plc_st::{compile, CompileReport, CompilerAdapter, DialectProfile};
use serde::{Deserialize, Serialize};

use super::repair::{repair_round, RepairContext, RepairRound, RepairState};
use super::{build_prompt, generate_initial, GenPrompt};
use crate::api_rec::{
    filter_apis, lambda_par, lambda_similarity, lambda_simcase, similarity_queries, ApiCandidateSet, BatchOutcome,
};
use crate::kb::{leakage_filter, ApiEntry, ApiLib, CaseRecord, CaseStore, StoredCase};
use crate::llm::{LlmGateway, MeteredGateway, Pricing, UsageRecord, UsageSummary};
use crate::planner::{classify_task, make_plan, Classification};
use crate::retrieval::{candidate_cases, rerank_cases, EmbeddingProvider, RankedCase, RankingMethod};
use crate::task::{Plan, Task};
use crate::templates::Templates;

/// Which stages run. Everything is on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub planning: bool,
    pub cases: bool,
    pub api_rec: bool,
    pub self_improve: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { planning: true, cases: true, api_rec: true, self_improve: true }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub ablation: Ablation,
    pub max_iterations: u32,
    pub pricing: Pricing,
    pub artifacts_dir: Option<std::path::PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { ablation: Ablation::default(), max_iterations: 3, pricing: Pricing::default(), artifacts_dir: None }
    }
}

impl PipelineConfig {
    pub fn iteration_budget(&self) -> u32 {
        if self.ablation.self_improve {
            self.max_iterations
        } else {
            0
        }
    }
}

/// Shared, read-only inputs of a run.
pub struct Resources<'a> {
    pub dialect: &'a DialectProfile,
    pub apilib: &'a ApiLib,
    pub cases: &'a CaseStore,
    pub embeddings: Option<&'a dyn EmbeddingProvider>,
    pub compiler: &'a CompilerAdapter,
    pub templates: &'a Templates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Passed,
    Failed,
    /// A stage could not produce its output.
    Errored { stage: String, message: String },
    /// The compiler adapter itself failed; not a verdict on the code.
    InfraFailed { message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageArtifacts {
    pub classification: Option<Classification>,
    pub plan: Option<Plan>,
    pub ranking_method: Option<RankingMethod>,
    pub candidates: Vec<RankedCase>,
    pub rerank_fell_back: bool,
    pub selected_cases: Vec<RankedCase>,
    pub api_candidates: Option<ApiCandidateSet>,
    pub filter_batches: Vec<BatchOutcome>,
    pub prompt: Option<GenPrompt>,
    pub initial_source: Option<String>,
    pub initial_report: Option<CompileReport>,
    pub rounds: Vec<RepairRound>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub outcome: Outcome,
    pub final_source: Option<String>,
    pub final_report: Option<CompileReport>,
    pub iterations: u32,
    pub artifacts: StageArtifacts,
    pub usage: UsageSummary,
    pub calls: Vec<UsageRecord>,
}

impl TaskResult {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Passed
    }

    /// Diagnostics left in the final compile; none if the task errored.
    pub fn final_diagnostics(&self) -> &[plc_st::Diagnostic] {
        self.final_report.as_ref().map_or(&[], |r| &r.diagnostics)
    }
}

struct Run {
    artifacts: StageArtifacts,
    source: Option<String>,
    report: Option<CompileReport>,
    iterations: u32,
}

fn errored(stage: &str, e: impl std::fmt::Display) -> Outcome {
    Outcome::Errored { stage: stage.to_string(), message: e.to_string() }
}

/// Runs every enabled stage for `task`. Never panics on model or compiler
/// trouble: failures end up in [`Outcome`].
pub fn run_pipeline(task: &Task, res: &Resources<'_>, llm: &dyn LlmGateway, config: &PipelineConfig) -> TaskResult {
    let metered = MeteredGateway::new(llm, config.pricing);
    let mut run = Run { artifacts: StageArtifacts::default(), source: None, report: None, iterations: 0 };
    let outcome = stages(task, res, &metered, config, &mut run).unwrap_or_else(|o| o);
    let result = TaskResult {
        task: task.name.clone(),
        outcome,
        final_source: run.source,
        final_report: run.report,
        iterations: run.iterations,
        artifacts: run.artifacts,
        usage: metered.summary(),
        calls: metered.records(),
    };
    if let Some(dir) = &config.artifacts_dir {
        if let Err(e) = persist_artifacts(dir, &result) {
            tracing::error!(task = %task.name, "could not write artifacts: {e}");
        }
    }
    result
}

fn stages(
    task: &Task,
    res: &Resources<'_>,
    llm: &dyn LlmGateway,
    config: &PipelineConfig,
    run: &mut Run,
) -> Result<Outcome, Outcome> {
    let ab = config.ablation;
    let a = &mut run.artifacts;

    if ab.planning {
        let c = classify_task(task, llm, res.templates).map_err(|e| errored("classification", e))?;
        if c.defaulted {
            a.warnings.push("classification defaulted to GENERAL_PURPOSE".into());
        }
        a.classification = Some(c);
        let plan = make_plan(task, c.kind, res.dialect, llm, res.templates).map_err(|e| errored("planning", e))?;
        a.plan = Some(plan);
    }

    let mut selected: Vec<&StoredCase> = Vec::new();
    if ab.cases {
        let view = leakage_filter(task, res.cases);
        if view.is_empty() {
            a.warnings.push("no cases left after leakage filtering".into());
        }
        let (candidates, method) = candidate_cases(task, &view, res.embeddings);
        if method == RankingMethod::Lexical && res.embeddings.is_some() {
            a.warnings.push("embedding ranking failed, lexical ranking used".into());
        }
        let picked =
            rerank_cases(task, &candidates, &view, llm, res.templates).map_err(|e| errored("case_retrieval", e))?;
        if picked.fell_back {
            a.warnings.push("rerank reply unusable, similarity order kept".into());
        }
        selected = picked.selected.iter().filter_map(|r| view.get(&r.case_id)).collect();
        a.ranking_method = Some(method);
        a.candidates = candidates;
        a.rerank_fell_back = picked.fell_back;
        a.selected_cases = picked.selected;
    }

    let mut apis: Vec<&ApiEntry> = Vec::new();
    if ab.api_rec {
        let sim = lambda_similarity(&similarity_queries(task, a.plan.as_ref()), res.apilib);
        let par = lambda_par(task, res.apilib, res.dialect);
        let cases = if ab.cases { lambda_simcase(&selected) } else { BTreeSet::new() };
        let mut set = ApiCandidateSet::new(sim, par, cases);
        let (kept, batches) =
            filter_apis(&set.union, task, a.plan.as_ref(), res.apilib, res.dialect, llm, res.templates)
                .map_err(|e| errored("api_recommendation", e))?;
        if batches.iter().any(|b| b.failed) {
            a.warnings.push("an API filter batch was kept whole".into());
        }
        set.filtered = kept;
        apis = set.filtered.iter().filter_map(|n| res.apilib.get(n)).collect();
        a.api_candidates = Some(set);
        a.filter_batches = batches;
    }

    let case_records: Vec<&CaseRecord> = selected.iter().map(|c| &c.record).collect();
    let prompt = build_prompt(task, a.plan.as_ref(), &apis, &case_records, res.dialect, res.templates)
        .map_err(|e| errored("generation", e))?;
    let source = generate_initial(&prompt, llm).map_err(|e| errored("generation", e))?;
    a.prompt = Some(prompt);
    a.initial_source = Some(source.clone());
    run.source = Some(source.clone());

    let infra = |e: plc_st::AdapterError| Outcome::InfraFailed { message: e.to_string() };
    let report = compile(&source, res.compiler, res.dialect, res.apilib).map_err(infra)?;
    a.initial_report = Some(report.clone());
    run.report = Some(report.clone());

    let ctx = RepairContext {
        task,
        dialect: res.dialect,
        apilib: res.apilib,
        compiler: res.compiler,
        llm,
        templates: res.templates,
        max_iterations: config.iteration_budget(),
    };
    let mut state = RepairState::new(source, report);
    while !state.report.pass && state.iteration < ctx.max_iterations {
        match repair_round(state.clone(), &ctx) {
            Ok(next) => {
                state = next;
                run.source = Some(state.source.clone());
                run.report = Some(state.report.clone());
                run.iterations = state.iteration;
                run.artifacts.rounds = state.history.clone();
            }
            Err(super::GenError::Adapter(e)) => return Err(infra(e)),
            Err(e) => return Err(errored("repair", e)),
        }
    }
    Ok(if state.report.pass { Outcome::Passed } else { Outcome::Failed })
}

/// File-system safe form of a task name.
pub fn artifact_dir_name(task: &str) -> String {
    task.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifacts serialize") + "\n"
}

/// Writes every intermediate artifact of `result` under
/// `dir/<task>/`, with file names that depend only on the content.
pub fn persist_artifacts(dir: &Path, result: &TaskResult) -> io::Result<()> {
    let out = dir.join(artifact_dir_name(&result.task));
    fs::create_dir_all(&out)?;
    let a = &result.artifacts;
    if let Some(c) = &a.classification {
        fs::write(out.join("classification.json"), json(c))?;
    }
    if let Some(p) = &a.plan {
        fs::write(out.join("plan.json"), json(p))?;
    }
    if a.ranking_method.is_some() {
        let cases = serde_json::json!({
            "ranking_method": a.ranking_method,
            "candidates": a.candidates,
            "selected": a.selected_cases,
            "rerank_fell_back": a.rerank_fell_back,
        });
        fs::write(out.join("cases.json"), json(&cases))?;
    }
    if let Some(s) = &a.api_candidates {
        let apis = serde_json::json!({ "sets": s, "batches": a.filter_batches });
        fs::write(out.join("apis.json"), json(&apis))?;
    }
    if let Some(p) = &a.prompt {
        fs::write(out.join("prompt.txt"), format!("{}\n\n---\n\n{}\n", p.system, p.user()))?;
    }
    if let Some(s) = &a.initial_source {
        fs::write(out.join("initial.st"), s)?;
    }
    if let Some(r) = &a.initial_report {
        fs::write(out.join("initial.report.json"), json(r))?;
    }
    for r in &a.rounds {
        let n = r.iteration;
        fs::write(out.join(format!("round-{n}.prompt.txt")), &r.prompt)?;
        fs::write(
            out.join(format!("round-{n}.patches.json")),
            json(&serde_json::json!({ "patches": r.patches.patches, "outcomes": r.outcomes, "unparsed": r.unparsed })),
        )?;
        fs::write(out.join(format!("round-{n}.st")), &r.source)?;
        fs::write(out.join(format!("round-{n}.report.json")), json(&r.report))?;
    }
    if let Some(s) = &result.final_source {
        fs::write(out.join("final.st"), s)?;
    }
    fs::write(out.join("result.json"), json(result))?;
    Ok(())
}

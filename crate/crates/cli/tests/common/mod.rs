//! Shared test support: fixture paths, resource loading and the scripted
//! responder that produced the recorded transcript.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use stgen_cli::{KbArgs, Setup};
use stgen_core::generator::{Ablation, PipelineConfig};
use stgen_core::harness::load_tasks;
use stgen_core::llm::{approx_tokens, content_digest, ChatRequest, Completion, LlmError, Pricing, Usage};
use stgen_core::retrieval::tokenize;
use stgen_core::task::Task;

pub const DIALECT: &str = "siemens_scl";
pub const EMBED_DIM: usize = 48;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/siemens")
}

pub fn data(file: &str) -> PathBuf {
    data_dir().join(file)
}

pub fn kb_args() -> KbArgs {
    KbArgs {
        apilib: Some(data("apilib.jsonl")),
        cases: Some(data("cases.jsonl")),
        embeddings: Some(data("embeddings.jsonl")),
        dialects_dir: None,
        templates: None,
        external: None,
    }
}

pub fn setup() -> Setup {
    Setup::load(DIALECT, &kb_args()).expect("fixture knowledge bases load")
}

pub fn tasks() -> Vec<Task> {
    load_tasks(&data("tasks.jsonl")).unwrap().into_iter().map(|b| b.task).collect()
}

pub const PRICING: Pricing = Pricing { prompt_per_1k: 0.5, completion_per_1k: 1.5 };

pub fn config(ablation: Ablation) -> PipelineConfig {
    PipelineConfig { ablation, max_iterations: 3, pricing: PRICING, artifacts_dir: None }
}

/// The full configuration followed by each single-stage ablation.
pub fn ablations() -> Vec<(&'static str, Ablation)> {
    let all = Ablation::default();
    vec![
        ("full", all),
        ("no-planning", Ablation { planning: false, ..all }),
        ("no-cases", Ablation { cases: false, ..all }),
        ("no-api-rec", Ablation { api_rec: false, ..all }),
        ("no-self-improve", Ablation { self_improve: false, ..all }),
    ]
}

/// Deterministic hashed bag-of-words vector of a text.
pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    for t in tokenize(text) {
        let h = content_digest("embed", &t);
        let bucket = usize::from_str_radix(&h[..8], 16).unwrap() % EMBED_DIM;
        let sign = if h.as_bytes()[8] % 2 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    v
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptPatch {
    pub find: String,
    pub replace: String,
    pub section: String,
    /// Text that must be visible in the prompt for the patch to be sent;
    /// defaults to `find`.
    #[serde(default)]
    pub when: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptTask {
    pub label: String,
    pub plan: serde_json::Value,
    pub apis: Vec<String>,
    pub code: String,
    pub patches: Vec<ScriptPatch>,
    #[serde(default)]
    pub unfenced_first: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Script {
    pub tasks: BTreeMap<String, ScriptTask>,
}

impl Script {
    pub fn load() -> Script {
        serde_json::from_str(&std::fs::read_to_string(data("script.json")).unwrap()).unwrap()
    }

    /// Answers a request the way the authored script says the model did.
    pub fn respond(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        let name = task_name(&req.user)
            .ok_or_else(|| LlmError::Malformed(format!("no task name in {} prompt", req.tag)))?;
        let t = self.tasks.get(&name).ok_or_else(|| LlmError::Malformed(format!("unscripted task {name}")))?;
        let retried = req.user.contains("Your previous reply was rejected");
        let text = match req.tag.as_str() {
            "classify" => t.label.clone(),
            "plan" => format!("```json\n{}\n```", serde_json::to_string_pretty(&t.plan).unwrap()),
            "rerank" => {
                let mut ids: Vec<&str> = req.user.lines().filter_map(|l| l.strip_prefix("- id: ")).collect();
                if ids.len() >= 2 {
                    ids.swap(0, 1);
                }
                ids.truncate(3);
                format!("```json\n{}\n```", serde_json::to_string(&ids).unwrap())
            }
            "api_filter" => {
                let keep: Vec<&str> = req
                    .user
                    .lines()
                    .filter_map(|l| l.strip_prefix("- "))
                    .filter(|n| t.apis.iter().any(|a| a == n))
                    .collect();
                format!("```json\n{}\n```", serde_json::to_string(&keep).unwrap())
            }
            "generate" if t.unfenced_first && !retried => {
                "The block detects the rising edge of the condition, latches the alarm and counts it.".to_string()
            }
            "generate" => format!("```scl\n{}```", t.code),
            "repair" => {
                let patches: Vec<serde_json::Value> = t
                    .patches
                    .iter()
                    .filter(|p| req.user.contains(p.when.as_deref().unwrap_or(&p.find)))
                    .map(|p| serde_json::json!({ "find": p.find, "replace": p.replace, "section": p.section }))
                    .collect();
                format!("```json\n{}\n```", serde_json::json!({ "patches": patches }))
            }
            other => return Err(LlmError::Malformed(format!("unscripted tag {other}"))),
        };
        let usage = Usage {
            prompt_tokens: approx_tokens(&req.system) + approx_tokens(&req.user),
            completion_tokens: approx_tokens(&text),
        };
        Ok(Completion { text, usage })
    }
}

/// The task a prompt is about, from its `Task:` line or generation header.
pub fn task_name(user: &str) -> Option<String> {
    for line in user.lines() {
        for prefix in ["Task: ", "New task: "] {
            if let Some(rest) = line.strip_prefix(prefix) {
                return Some(rest.trim().to_string());
            }
        }
        if let Some((_, rest)) = line.split_once(" named ") {
            return rest.strip_suffix('.').map(|n| n.trim().to_string());
        }
    }
    None
}

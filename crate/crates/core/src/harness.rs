//! Benchmark runner: loads tasks, runs the pipeline over them and
//! aggregates pass rate, error counts and spend.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use plc_st::ErrorClass;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{run_pipeline, Outcome, PipelineConfig, Resources, TaskResult};
use crate::llm::LlmGateway;
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchTask {
    #[serde(flatten)]
    pub task: Task,
    /// Reference implementation, kept for inspection only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("{path}: line {line}: duplicate task name `{name}`")]
    Duplicate { path: String, line: usize, name: String },
    #[error("no tasks")]
    NoTasks,
    #[error("workers must be at least 1")]
    Workers,
}

/// Reads one task per non-blank line. Names must be unique.
pub fn load_tasks(path: &Path) -> Result<Vec<BenchTask>, BenchError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: p.clone(), source })?;
    parse_tasks(&text, &p)
}

pub fn parse_tasks(text: &str, origin: &str) -> Result<Vec<BenchTask>, BenchError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: BenchTask = serde_json::from_str(line).map_err(|e| BenchError::Record {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if t.task.name.trim().is_empty() {
            return Err(BenchError::Record { path: origin.to_string(), line: i + 1, message: "empty name".into() });
        }
        if !seen.insert(t.task.name.clone()) {
            return Err(BenchError::Duplicate { path: origin.to_string(), line: i + 1, name: t.task.name });
        }
        out.push(t);
    }
    if out.is_empty() {
        return Err(BenchError::NoTasks);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tasks: usize,
    pub passed: usize,
    pub pass_rate: f64,
    /// Mean final diagnostic count over all tasks. Tasks without a final
    /// compile count as zero.
    pub avg_errors: f64,
    pub per_class: BTreeMap<ErrorClass, f64>,
    pub calls: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
    pub errored: Vec<String>,
    pub infra_failed: Vec<String>,
}

pub fn compute_metrics(results: &[TaskResult]) -> Result<RunMetrics, BenchError> {
    if results.is_empty() {
        return Err(BenchError::NoTasks);
    }
    let n = results.len() as f64;
    let mut per_class: BTreeMap<ErrorClass, f64> = ErrorClass::ALL.iter().map(|c| (*c, 0.0)).collect();
    let mut total = 0usize;
    let mut m = RunMetrics {
        tasks: results.len(),
        passed: 0,
        pass_rate: 0.0,
        avg_errors: 0.0,
        per_class: BTreeMap::new(),
        calls: 0,
        prompt_tokens: 0,
        completion_tokens: 0,
        cost: 0.0,
        errored: Vec::new(),
        infra_failed: Vec::new(),
    };
    for r in results {
        match &r.outcome {
            Outcome::Passed => m.passed += 1,
            Outcome::Failed => {}
            Outcome::Errored { .. } => m.errored.push(r.task.clone()),
            Outcome::InfraFailed { .. } => m.infra_failed.push(r.task.clone()),
        }
        if matches!(r.outcome, Outcome::Passed | Outcome::Failed) {
            for d in r.final_diagnostics() {
                *per_class.get_mut(&d.class).unwrap() += 1.0;
                total += 1;
            }
        }
        m.calls += r.usage.calls;
        m.prompt_tokens += r.usage.prompt_tokens;
        m.completion_tokens += r.usage.completion_tokens;
        m.cost += r.usage.cost;
    }
    m.pass_rate = m.passed as f64 / n;
    m.avg_errors = total as f64 / n;
    m.per_class = per_class.into_iter().map(|(c, v)| (c, v / n)).collect();
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub task: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub metrics: RunMetrics,
    /// In task-file order regardless of worker count.
    pub results: Vec<TaskResult>,
    pub timings: Vec<TaskTiming>,
}

/// Runs the tasks on `workers` threads and aggregates the results.
pub fn run_benchmark(
    tasks: &[Task],
    res: &Resources<'_>,
    llm: &dyn LlmGateway,
    config: &PipelineConfig,
    workers: usize,
) -> Result<BenchRun, BenchError> {
    if tasks.is_empty() {
        return Err(BenchError::NoTasks);
    }
    if workers == 0 {
        return Err(BenchError::Workers);
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<(TaskResult, f64)>>> = Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.min(tasks.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let start = Instant::now();
                let r = run_pipeline(task, res, llm, config);
                tracing::info!(task = %task.name, outcome = ?r.outcome, iterations = r.iterations, "task done");
                slots.lock().unwrap()[i] = Some((r, start.elapsed().as_secs_f64()));
            });
        }
    });
    let (results, timings): (Vec<_>, Vec<_>) = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| {
            let (r, secs) = slot.expect("every task ran");
            let t = TaskTiming { task: r.task.clone(), seconds: secs };
            (r, t)
        })
        .unzip();
    let metrics = compute_metrics(&results)?;
    Ok(BenchRun { metrics, results, timings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Json,
}

pub fn report(m: &RunMetrics, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(m).expect("metrics serialize"),
        ReportFormat::Human => {
            let mut s = format!(
                "tasks        {}\npassed       {}\npass rate    {:.3}\navg errors   {:.3}\n",
                m.tasks, m.passed, m.pass_rate, m.avg_errors
            );
            for (c, v) in &m.per_class {
                s.push_str(&format!("  {:<16} {:.3}\n", c.as_str(), v));
            }
            s.push_str(&format!(
                "llm calls    {}\ntokens       {} prompt, {} completion\ncost         {:.4}\n",
                m.calls, m.prompt_tokens, m.completion_tokens, m.cost
            ));
            if !m.errored.is_empty() {
                s.push_str(&format!("errored      {}\n", m.errored.join(", ")));
            }
            if !m.infra_failed.is_empty() {
                s.push_str(&format!("infra failed {}\n", m.infra_failed.join(", ")));
            }
            s
        }
    }
}

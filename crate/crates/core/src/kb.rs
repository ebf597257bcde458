//! Vendor knowledge bases: the API library and the case library.
//!
//! Both are stored as JSON Lines, one record per line, UTF-8. Blank lines
//! are ignored. The API library is loaded strictly (any bad record fails the
//! load); the case library is loaded leniently (bad records are rejected
//! with a reason, questionable ones are kept and flagged).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use plc_st::{ParamSpec, PouKind, Signature, SignatureSource};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ChatRequest, LlmError, LlmGateway};
use crate::reply::{ask_with_retry, parse_json, Asked};
use crate::retrieval::tokenize;
use crate::task::{Plan, Task};
use crate::templates::{TemplateError, Templates};

/// Retrieval index of one API: summary, usage scenarios and keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiIndex {
    pub summary: String,
    #[serde(default)]
    pub scenarios: Vec<String>,
    pub keywords: BTreeSet<String>,
}

impl ApiIndex {
    /// Text indexed by BM25.
    pub fn document(&self) -> String {
        let kw: Vec<&str> = self.keywords.iter().map(String::as_str).collect();
        format!("{}\n{}\n{}", self.summary, self.scenarios.join("\n"), kw.join(" "))
    }
}

/// Lowercases keywords and adds the underscore/camelCase parts of
/// identifiers. Idempotent.
pub fn normalize_keywords<'a>(raw: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    raw.into_iter().flat_map(tokenize).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiEntry {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub kind: PouKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_type: Option<String>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub examples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<ApiIndex>,
}

impl ApiEntry {
    pub fn signature(&self) -> Signature {
        Signature {
            name: self.name.clone(),
            kind: self.kind,
            return_type: self.return_type.clone(),
            params: self.params.clone(),
            variadic: false,
        }
    }

    /// Text retrieved against: the index when present, else name and
    /// description.
    pub fn document(&self) -> String {
        match &self.index {
            Some(ix) => ix.document(),
            None => format!("{}\n{}", self.name, self.description),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("name is empty".into());
        }
        if let Some(p) = self.params.iter().find(|p| p.type_name.trim().is_empty()) {
            return Err(format!("parameter `{}` has an empty type", p.name));
        }
        if let Some(ix) = &self.index {
            if ix.keywords.is_empty() {
                return Err("index has no keywords".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: record {ordinal} (line {line}), field `{field}`: {message}")]
    Record { path: String, line: usize, ordinal: usize, field: String, message: String },
    #[error("{path}: line {line}: duplicate API name `{name}` (first defined on line {first_line})")]
    Conflict { path: String, name: String, first_line: usize, line: usize },
}

/// Immutable API library keyed by case-insensitive name.
#[derive(Debug, Clone, Default)]
pub struct ApiLib {
    entries: Vec<ApiEntry>,
    signatures: Vec<Signature>,
    by_name: HashMap<String, usize>,
}

impl PartialEq for ApiLib {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ApiLib {
    pub fn from_entries(entries: Vec<ApiEntry>) -> Result<Self, KbError> {
        let text = entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes")).collect::<Vec<_>>();
        parse_apilib(&text.join("\n"), "<memory>")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ApiEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ApiEntry> {
        self.by_name.get(&name.to_ascii_uppercase()).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
    }
}

impl SignatureSource for ApiLib {
    fn lookup(&self, name: &str) -> Option<&Signature> {
        self.by_name.get(&name.to_ascii_uppercase()).map(|&i| &self.signatures[i])
    }
}

pub fn load_apilib(path: &Path) -> Result<ApiLib, KbError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| KbError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_apilib(&text, &path.display().to_string())
}

pub fn parse_apilib(text: &str, origin: &str) -> Result<ApiLib, KbError> {
    let mut lib = ApiLib::default();
    let mut lines: HashMap<String, usize> = HashMap::new();
    let records = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (ordinal, (i, line)) in records.enumerate() {
        let (line_no, ordinal) = (i + 1, ordinal + 1);
        let record_err = |field: String, message: String| KbError::Record {
            path: origin.to_string(),
            line: line_no,
            ordinal,
            field,
            message,
        };
        let de = &mut serde_json::Deserializer::from_str(line);
        let mut entry: ApiEntry = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            record_err(field, e.into_inner().to_string())
        })?;
        entry.validate().map_err(|m| record_err("name/params/index".into(), m))?;
        if let Some(ix) = &mut entry.index {
            ix.keywords = normalize_keywords(ix.keywords.iter().map(String::as_str));
        }
        let key = entry.name.to_ascii_uppercase();
        if let Some(&first_line) = lines.get(&key) {
            return Err(KbError::Conflict { path: origin.to_string(), name: entry.name, first_line, line: line_no });
        }
        lines.insert(key.clone(), line_no);
        lib.by_name.insert(key, lib.entries.len());
        lib.signatures.push(entry.signature());
        lib.entries.push(entry);
    }
    Ok(lib)
}

/// One case: task, plan, implementation and the APIs it uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub task: Task,
    pub plan: Plan,
    pub code: String,
    #[serde(default)]
    pub apis: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum CaseFlag {
    /// Referenced APIs absent from the paired library.
    UnknownApi { names: Vec<String> },
    PlanMissing,
    /// Plan stored as a single free-text blob.
    LegacyPlan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredCase {
    pub record: CaseRecord,
    pub flags: Vec<CaseFlag>,
}

impl StoredCase {
    /// APIs of the case that exist in the library.
    pub fn known_apis(&self) -> impl Iterator<Item = &str> {
        let unknown: Vec<&String> = self
            .flags
            .iter()
            .flat_map(|f| match f {
                CaseFlag::UnknownApi { names } => names.iter().collect(),
                _ => Vec::new(),
            })
            .collect();
        self.record.apis.iter().filter(move |a| !unknown.contains(a)).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CaseStore {
    cases: Vec<StoredCase>,
    rejected: Vec<Rejection>,
}

impl CaseStore {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[StoredCase] {
        &self.cases
    }

    pub fn rejected(&self) -> &[Rejection] {
        &self.rejected
    }

    pub fn get(&self, id: &str) -> Option<&StoredCase> {
        self.cases.iter().find(|c| c.record.id == id)
    }

    /// A view over every case.
    pub fn all(&self) -> CaseView<'_> {
        CaseView { store: self, indices: (0..self.cases.len()).collect() }
    }
}

/// A filtered, read-only selection of a [`CaseStore`].
#[derive(Debug, Clone)]
pub struct CaseView<'a> {
    store: &'a CaseStore,
    indices: Vec<usize>,
}

impl<'a> CaseView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a StoredCase> + '_ {
        self.indices.iter().map(|&i| &self.store.cases[i])
    }

    pub fn get(&self, id: &str) -> Option<&'a StoredCase> {
        self.iter().find(|c| c.record.id == id)
    }
}

pub fn load_rq2st(path: &Path, apilib: &ApiLib) -> Result<CaseStore, KbError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| KbError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Ok(parse_rq2st(&text, apilib))
}

pub fn parse_rq2st(text: &str, apilib: &ApiLib) -> CaseStore {
    let mut store = CaseStore::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match parse_case(line, apilib) {
            Ok(case) if store.get(&case.record.id).is_some() => store.rejected.push(Rejection {
                line: i + 1,
                id: Some(case.record.id.clone()),
                reason: format!("duplicate case id `{}`", case.record.id),
            }),
            Ok(case) => store.cases.push(case),
            Err((id, reason)) => store.rejected.push(Rejection { line: i + 1, id, reason }),
        }
    }
    store
}

fn parse_case(line: &str, apilib: &ApiLib) -> Result<StoredCase, (Option<String>, String)> {
    let v: Value = serde_json::from_str(line).map_err(|e| (None, format!("not a JSON record: {e}")))?;
    let id = v.get("id").and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
    let Some(id) = id else { return Err((None, "missing or empty `id`".into())) };
    let fail = |reason: String| (Some(id.clone()), reason);

    let task: Task = match v.get("task") {
        Some(t) => serde_path_to_error::deserialize(t).map_err(|e| fail(format!("task.{}: {}", e.path(), e.inner())))?,
        None => return Err(fail("missing `task`".into())),
    };
    let code = v.get("code").and_then(Value::as_str).unwrap_or("");
    if code.trim().is_empty() {
        return Err(fail("empty `code`".into()));
    }
    let mut flags = Vec::new();
    let plan = match v.get("plan") {
        None | Some(Value::Null) => {
            flags.push(CaseFlag::PlanMissing);
            Plan::default()
        }
        Some(Value::String(s)) if s.trim().is_empty() => {
            flags.push(CaseFlag::PlanMissing);
            Plan::default()
        }
        Some(Value::String(s)) => {
            flags.push(CaseFlag::LegacyPlan);
            Plan::linear(vec![s.trim().to_string()])
        }
        Some(p) => serde_path_to_error::deserialize(p).map_err(|e| fail(format!("plan.{}: {}", e.path(), e.inner())))?,
    };
    let raw_apis: Vec<String> = match v.get("apis") {
        None | Some(Value::Null) => Vec::new(),
        Some(a) => serde_json::from_value(a.clone()).map_err(|e| fail(format!("apis: {e}")))?,
    };
    let mut apis = Vec::new();
    let mut unknown = Vec::new();
    for name in raw_apis {
        match apilib.get(&name) {
            Some(entry) => apis.push(entry.name.clone()),
            None => {
                unknown.push(name.clone());
                apis.push(name);
            }
        }
    }
    if !unknown.is_empty() {
        flags.push(CaseFlag::UnknownApi { names: unknown });
    }
    Ok(StoredCase { record: CaseRecord { id, task, plan, code: code.to_string(), apis }, flags })
}

/// Case-insensitive containment of either name in the other.
pub fn names_leak(a: &str, b: &str) -> bool {
    let (a, b) = (a.to_lowercase(), b.to_lowercase());
    a.contains(&b) || b.contains(&a)
}

/// Cases usable as examples for `task`: every case whose name and the task
/// name contain one another is excluded.
pub fn leakage_filter<'a>(task: &Task, store: &'a CaseStore) -> CaseView<'a> {
    let indices = store
        .cases
        .iter()
        .enumerate()
        .filter(|(_, c)| !names_leak(&task.name, &c.record.task.name))
        .map(|(i, _)| i)
        .collect();
    CaseView { store, indices }
}

#[derive(Debug, Deserialize)]
struct IndexReply {
    summary: String,
    #[serde(default)]
    scenarios: Vec<String>,
    keywords: Vec<String>,
}

fn parse_index_reply(text: &str) -> Result<ApiIndex, String> {
    let r: IndexReply = parse_json(text)?;
    if r.summary.trim().is_empty() {
        return Err("empty summary".into());
    }
    let keywords = normalize_keywords(r.keywords.iter().map(String::as_str));
    if keywords.is_empty() {
        return Err("no keywords".into());
    }
    Ok(ApiIndex { summary: r.summary.trim().to_string(), scenarios: r.scenarios, keywords })
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Asks the model for an index of each entry. The prompt carries the
/// signature, description and examples. Entries whose replies do not parse
/// after one retry come back as `None` (unindexed).
pub fn build_index(
    entries: &[ApiEntry],
    llm: &dyn LlmGateway,
    templates: &Templates,
) -> Result<Vec<Option<ApiIndex>>, IndexError> {
    let system = templates.render("index.system", &[])?;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let examples = if e.examples.is_empty() { "(none)".to_string() } else { e.examples.join("\n\n") };
        let user = templates.render(
            "index.user",
            &[
                ("name", &e.name),
                ("signature", &e.signature().render()),
                ("description", &e.description),
                ("examples", &examples),
            ],
        )?;
        match ask_with_retry(llm, ChatRequest::new("index", system.clone(), user), parse_index_reply)? {
            Asked::Parsed(ix) => out.push(Some(ix)),
            Asked::Unparsed { error, .. } => {
                tracing::warn!(api = %e.name, "index reply unusable, entry left unindexed: {error}");
                out.push(None);
            }
        }
    }
    Ok(out)
}

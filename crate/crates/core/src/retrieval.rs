//! Tokenization, Okapi BM25, candidate case selection and LLM reranking.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{CaseRecord, CaseView};
use crate::llm::{ChatRequest, LlmError, LlmGateway};
use crate::reply::{ask_with_retry, parse_json, Asked};
use crate::task::Task;
use crate::templates::{TemplateError, Templates};

pub const CANDIDATES: usize = 5;
pub const SELECTED: usize = 3;

/// Lowercase tokens. Each run of letters, digits and underscores yields the
/// whole run, followed by its underscore/camelCase parts when it has more
/// than one.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|w| !w.is_empty()) {
        out.push(word.to_lowercase());
        let parts = split_identifier(word);
        if parts.len() > 1 {
            out.extend(parts.into_iter().map(|p| p.to_lowercase()));
        }
    }
    out
}

/// `MOVE_BLK_VARIANT` -> MOVE, BLK, VARIANT; `readFile` -> read, File;
/// `XMLParser` -> XML, Parser.
fn split_identifier(word: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    for chunk in word.split('_').filter(|c| !c.is_empty()) {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1].1, chars[i].1);
            let next_lower = chars.get(i + 1).is_some_and(|(_, n)| n.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
            if boundary {
                parts.push(&chunk[start..chars[i].0]);
                start = chars[i].0;
            }
        }
        parts.push(&chunk[start..]);
    }
    parts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k1 > 0.0) {
            return Err(format!("k1 must be positive, got {}", self.k1));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(format!("b must lie in [0, 1], got {}", self.b));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bm25Doc {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Bm25Doc {
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Bm25Doc { id: id.into(), tokens: tokenize(text) }
    }
}

/// Okapi BM25 over distinct query terms with the non-negative IDF
/// `ln(1 + (N - df + 0.5) / (df + 0.5))`. Every document is returned,
/// best first; equal scores order by id.
pub fn bm25_rank(query: &[String], docs: &[Bm25Doc], params: Bm25Params) -> Vec<(String, f64)> {
    if docs.is_empty() {
        return Vec::new();
    }
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.tokens.len()).sum::<usize>() as f64 / n;
    let mut seen = HashSet::new();
    let terms: Vec<&String> = query.iter().filter(|t| seen.insert(t.as_str())).collect();

    let mut df: HashMap<&str, f64> = HashMap::new();
    let freqs: Vec<HashMap<&str, f64>> = docs
        .iter()
        .map(|d| {
            let mut tf = HashMap::new();
            for t in &d.tokens {
                *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
            }
            tf
        })
        .collect();
    for tf in &freqs {
        for t in &terms {
            if tf.contains_key(t.as_str()) {
                *df.entry(t.as_str()).or_insert(0.0) += 1.0;
            }
        }
    }

    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .zip(&freqs)
        .map(|(doc, tf)| {
            let dl = doc.tokens.len() as f64;
            let norm = if avgdl > 0.0 { 1.0 - params.b + params.b * dl / avgdl } else { 1.0 };
            let score = terms
                .iter()
                .filter_map(|t| {
                    let f = *tf.get(t.as_str())?;
                    let d = df[t.as_str()];
                    let idf = (1.0 + (n - d + 0.5) / (d + 0.5)).ln();
                    Some(idf * f * (params.k1 + 1.0) / (f + params.k1 * norm))
                })
                .sum::<f64>();
            (doc.id.clone(), score)
        })
        .collect();
    sort_scored(&mut scored);
    scored
}

/// Descending score, then ascending id.
pub fn sort_scored(v: &mut [(String, f64)]) {
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no vector for `{0}`")]
    Missing(String),
    #[error("embedding fixture {path}: {message}")]
    Load { path: String, message: String },
    #[error("vector dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
}

/// Source of dense vectors for tasks and cases.
pub trait EmbeddingProvider: Send + Sync {
    fn task_vector(&self, task: &Task) -> Result<Vec<f64>, EmbeddingError>;
    fn case_vector(&self, case: &CaseRecord) -> Result<Vec<f64>, EmbeddingError>;
}

#[derive(Debug, Deserialize)]
struct VectorRecord {
    case_id: String,
    vector: Vec<f64>,
}

/// Precomputed vectors, one JSON record per line: `{"case_id": ..., "vector": [...]}`.
/// Task vectors use the key `task:<task name>`.
#[derive(Debug, Clone, Default)]
pub struct FixtureEmbeddings {
    vectors: HashMap<String, Vec<f64>>,
}

impl FixtureEmbeddings {
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let err = |message: String| EmbeddingError::Load { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: VectorRecord = serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            if r.vector.iter().any(|x| !x.is_finite()) {
                return Err(err(format!("line {}: non-finite component", i + 1)));
            }
            vectors.insert(r.case_id, r.vector);
        }
        Ok(FixtureEmbeddings { vectors })
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) {
        self.vectors.insert(key.into(), vector);
    }

    fn get(&self, key: &str) -> Result<Vec<f64>, EmbeddingError> {
        self.vectors.get(key).cloned().ok_or_else(|| EmbeddingError::Missing(key.to_string()))
    }
}

impl EmbeddingProvider for FixtureEmbeddings {
    fn task_vector(&self, task: &Task) -> Result<Vec<f64>, EmbeddingError> {
        self.get(&format!("task:{}", task.name))
    }

    fn case_vector(&self, case: &CaseRecord) -> Result<Vec<f64>, EmbeddingError> {
        self.get(&case.id)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::Dimension(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(if na == 0.0 || nb == 0.0 { 0.0 } else { (dot / (na * nb)).clamp(-1.0, 1.0) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCase {
    pub case_id: String,
    pub similarity_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_position: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMethod {
    Embedding,
    Lexical,
}

/// Top cases by similarity to the task. Embedding cosine is mapped to
/// `(1 + cos) / 2` so scores stay non-negative. Without a provider, or if it
/// fails, BM25 over the same texts is used instead.
pub fn candidate_cases(
    task: &Task,
    view: &CaseView<'_>,
    provider: Option<&dyn EmbeddingProvider>,
) -> (Vec<RankedCase>, RankingMethod) {
    let mut scored = match provider.map(|p| embedding_scores(task, view, p)) {
        Some(Ok(s)) => (s, RankingMethod::Embedding),
        Some(Err(e)) => {
            tracing::warn!(task = %task.name, "embedding ranking failed, using lexical ranking: {e}");
            (lexical_scores(task, view), RankingMethod::Lexical)
        }
        None => (lexical_scores(task, view), RankingMethod::Lexical),
    };
    sort_scored(&mut scored.0);
    let ranked = scored
        .0
        .into_iter()
        .take(CANDIDATES)
        .map(|(case_id, similarity_score)| RankedCase { case_id, similarity_score, rerank_position: None })
        .collect();
    (ranked, scored.1)
}

fn embedding_scores(
    task: &Task,
    view: &CaseView<'_>,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<(String, f64)>, EmbeddingError> {
    let q = provider.task_vector(task)?;
    view.iter()
        .map(|c| {
            let v = provider.case_vector(&c.record)?;
            Ok((c.record.id.clone(), (1.0 + cosine(&q, &v)?) / 2.0))
        })
        .collect()
}

fn lexical_scores(task: &Task, view: &CaseView<'_>) -> Vec<(String, f64)> {
    let docs: Vec<Bm25Doc> =
        view.iter().map(|c| Bm25Doc::from_text(c.record.id.clone(), &c.record.task.metadata_text())).collect();
    bm25_rank(&tokenize(&task.metadata_text()), &docs, Bm25Params::default())
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub selected: Vec<RankedCase>,
    /// True when the reply could not be used and similarity order was kept.
    pub fell_back: bool,
}

/// Picks up to three candidates in the order the model prefers. Unknown or
/// repeated ids in the reply are skipped and the remaining slots are filled
/// in similarity order. With fewer than three candidates no call is made.
pub fn rerank_cases(
    task: &Task,
    candidates: &[RankedCase],
    view: &CaseView<'_>,
    llm: &dyn LlmGateway,
    templates: &Templates,
) -> Result<RerankOutcome, RerankError> {
    if candidates.len() < SELECTED {
        let selected = positioned(candidates.to_vec());
        return Ok(RerankOutcome { selected, fell_back: false });
    }
    let listing: Vec<String> = candidates
        .iter()
        .filter_map(|c| view.get(&c.case_id))
        .map(|c| {
            format!(
                "- id: {}\n  name: {}\n  requirement: {}\n  plan: {}",
                c.record.id,
                c.record.task.name,
                c.record.task.req.trim(),
                c.record.plan.headline()
            )
        })
        .collect();
    let system = templates.render("rerank.system", &[])?;
    let user = templates.render(
        "rerank.user",
        &[("name", &task.name), ("req", task.req.trim()), ("candidates", &listing.join("\n"))],
    )?;
    let asked = ask_with_retry(llm, ChatRequest::new("rerank", system, user), |t| parse_json::<Vec<String>>(t))?;
    let (order, fell_back) = match asked {
        Asked::Parsed(ids) => (ids, false),
        Asked::Unparsed { error, .. } => {
            tracing::warn!(task = %task.name, "rerank reply unusable, keeping similarity order: {error}");
            (Vec::new(), true)
        }
    };
    let mut picked: Vec<RankedCase> = Vec::new();
    for id in &order {
        if picked.len() == SELECTED {
            break;
        }
        if let Some(c) = candidates.iter().find(|c| &c.case_id == id) {
            if !picked.iter().any(|p| p.case_id == c.case_id) {
                picked.push(c.clone());
            }
        }
    }
    for c in candidates {
        if picked.len() == SELECTED {
            break;
        }
        if !picked.iter().any(|p| p.case_id == c.case_id) {
            picked.push(c.clone());
        }
    }
    Ok(RerankOutcome { selected: positioned(picked), fell_back })
}

fn positioned(mut v: Vec<RankedCase>) -> Vec<RankedCase> {
    for (i, c) in v.iter_mut().enumerate() {
        c.rerank_position = Some(i as u8 + 1);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(toks("MOVE_BLK_VARIANT"), ["move_blk_variant", "move", "blk", "variant"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("readFile twice"), ["readfile", "read", "file", "twice"]);
        assert_eq!(toks("XMLParser, x.y"), ["xmlparser", "xml", "parser", "x", "y"]);
        assert_eq!(toks("DATE_TO_STRING(in)"), ["date_to_string", "date", "to", "string", "in"]);
        assert_eq!(toks("_tmp"), ["_tmp"]);
    }

    fn doc(id: &str, text: &str) -> Bm25Doc {
        Bm25Doc::from_text(id, text)
    }

    #[test]
    fn zero_overlap_scores_zero() {
        let docs = [doc("a", "alpha beta"), doc("b", "gamma")];
        let r = bm25_rank(&toks("delta"), &docs, Bm25Params::default());
        assert!(r.iter().all(|(_, s)| *s == 0.0));
        assert_eq!(r[0].0, "a");
    }

    #[test]
    fn single_match_ranks_first() {
        let docs = [doc("a", "stack push pop"), doc("b", "fifo queue buffer"), doc("c", "ring counter")];
        let r = bm25_rank(&toks("fifo"), &docs, Bm25Params::default());
        assert_eq!(r[0].0, "b");
        assert!(r[0].1 > 0.0);
        assert_eq!(r[1].1, 0.0);
    }

    #[test]
    fn empty_corpus() {
        assert!(bm25_rank(&toks("x"), &[], Bm25Params::default()).is_empty());
    }

    #[test]
    fn params_validation() {
        assert!(Bm25Params::default().validate().is_ok());
        assert!(Bm25Params { k1: 0.0, b: 0.5 }.validate().is_err());
        assert!(Bm25Params { k1: 1.0, b: 1.5 }.validate().is_err());
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }
}

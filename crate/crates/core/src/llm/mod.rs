//! Chat-completion gateway: a wire client for OpenAI-compatible endpoints,
//! a transcript replay backend, a recording decorator and usage metering.

mod live;
mod transcript;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{HttpTransport, LiveConfig, LiveGateway, ReqwestTransport, TransportError};
pub use transcript::{read_transcript, RecordingGateway, ReplayGateway, TranscriptRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Pipeline stage that issued the request.
    pub tag: String,
    pub system: String,
    pub user: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(tag: &str, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            tag: tag.to_string(),
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    /// Content digest used to key recorded interactions.
    pub fn digest(&self) -> String {
        content_digest(&self.system, &self.user)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.tag.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty tag".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

pub fn content_digest(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update([0u8]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("unrecorded interaction: tag `{tag}`, digest {digest}")]
    Unrecorded { tag: String, digest: String },
    #[error("digest collision for tag `{tag}`, digest {digest}: recorded content differs")]
    DigestCollision { tag: String, digest: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl LlmError {
    /// The endpoint itself failed, as opposed to a replay miss, a transcript
    /// problem or a bad request.
    pub fn is_endpoint_failure(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::Status { .. } | LlmError::Malformed(_))
    }
}

pub trait LlmGateway: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError>;
}

impl<G: LlmGateway + ?Sized> LlmGateway for &G {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }
}

impl<G: LlmGateway + ?Sized> LlmGateway for Box<G> {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        (**self).complete(req)
    }
}

/// Prices per 1000 tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl Pricing {
    pub fn cost(&self, usage: Usage) -> f64 {
        usage.prompt_tokens as f64 / 1000.0 * self.prompt_per_1k
            + usage.completion_tokens as f64 / 1000.0 * self.completion_per_1k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub tag: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub calls: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
}

impl UsageSummary {
    pub fn from_records(records: &[UsageRecord]) -> Self {
        let mut s = UsageSummary::default();
        for r in records {
            s.calls += 1;
            s.prompt_tokens += r.prompt_tokens;
            s.completion_tokens += r.completion_tokens;
            s.cost += r.cost;
        }
        s
    }
}

/// Decorator that logs usage and cost of every successful call.
pub struct MeteredGateway<G> {
    inner: G,
    pricing: Pricing,
    log: Mutex<Vec<UsageRecord>>,
}

impl<G: LlmGateway> MeteredGateway<G> {
    pub fn new(inner: G, pricing: Pricing) -> Self {
        MeteredGateway { inner, pricing, log: Mutex::new(Vec::new()) }
    }

    pub fn records(&self) -> Vec<UsageRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn summary(&self) -> UsageSummary {
        UsageSummary::from_records(&self.log.lock().unwrap())
    }
}

impl<G: LlmGateway> LlmGateway for MeteredGateway<G> {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        let out = self.inner.complete(req)?;
        self.log.lock().unwrap().push(UsageRecord {
            tag: req.tag.clone(),
            prompt_tokens: out.usage.prompt_tokens,
            completion_tokens: out.usage.completion_tokens,
            cost: self.pricing.cost(out.usage),
        });
        Ok(out)
    }
}

/// Gateway answering from a closure. Used by tests and fixture generation.
pub struct FnGateway<F>(pub F);

impl<F> LlmGateway for FnGateway<F>
where
    F: Fn(&ChatRequest) -> Result<Completion, LlmError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        (self.0)(req)
    }
}

/// Rough whitespace token count for offline responders.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_separates_system_and_user() {
        assert_ne!(content_digest("ab", "c"), content_digest("a", "bc"));
        assert_eq!(content_digest("a", "b").len(), 64);
    }

    #[test]
    fn request_validation() {
        let mut r = ChatRequest::new("plan", "s", "u");
        assert!(r.validate().is_ok());
        r.temperature = 2.5;
        assert!(r.validate().is_err());
        r.temperature = 0.0;
        r.tag = " ".into();
        assert!(r.validate().is_err());
    }

    #[test]
    fn metering_sums_costs() {
        let g = FnGateway(|r: &ChatRequest| {
            Ok(Completion { text: r.user.clone(), usage: Usage { prompt_tokens: 1000, completion_tokens: 500 } })
        });
        let m = MeteredGateway::new(g, Pricing { prompt_per_1k: 0.003, completion_per_1k: 0.015 });
        m.complete(&ChatRequest::new("a", "", "x")).unwrap();
        m.complete(&ChatRequest::new("b", "", "y")).unwrap();
        let s = m.summary();
        assert_eq!(s.calls, 2);
        assert_eq!(s.prompt_tokens, 2000);
        assert!((s.cost - 2.0 * (0.003 + 0.0075)).abs() < 1e-12);
        let total: f64 = m.records().iter().map(|r| r.cost).sum();
        assert!((total - s.cost).abs() < 1e-12);
    }
}

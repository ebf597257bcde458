//! Wire client for OpenAI-compatible chat-completion endpoints.

use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::{ChatRequest, Completion, LlmError, LlmGateway, Usage};

#[derive(Debug, Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
}

/// Minimal HTTP surface so the gateway can be exercised without sockets.
pub trait HttpTransport: Send + Sync {
    /// POSTs `body` as JSON and returns `(status, response body)`.
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header("content-type", "application/json")
            .body(body.to_string());
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| TransportError { message: e.to_string() })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError { message: e.to_string() })?;
        Ok((status, text))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        LiveConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 2,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads `PLCGEN_LLM_ENDPOINT`, `PLCGEN_LLM_MODEL`, `PLCGEN_LLM_API_KEY`
    /// and optionally `PLCGEN_LLM_TIMEOUT_SECS`.
    pub fn from_env() -> Result<Self, LlmError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let endpoint = var("PLCGEN_LLM_ENDPOINT").ok_or_else(|| LlmError::Config("PLCGEN_LLM_ENDPOINT is not set".into()))?;
        let model = var("PLCGEN_LLM_MODEL").ok_or_else(|| LlmError::Config("PLCGEN_LLM_MODEL is not set".into()))?;
        let mut cfg = LiveConfig::new(endpoint, model);
        cfg.api_key = var("PLCGEN_LLM_API_KEY");
        if let Some(t) = var("PLCGEN_LLM_TIMEOUT_SECS") {
            let secs: u64 = t.parse().map_err(|_| LlmError::Config(format!("bad PLCGEN_LLM_TIMEOUT_SECS `{t}`")))?;
            cfg.timeout = Duration::from_secs(secs);
        }
        Ok(cfg)
    }
}

pub struct LiveGateway<T> {
    config: LiveConfig,
    transport: T,
}

impl<T: HttpTransport> LiveGateway<T> {
    pub fn new(config: LiveConfig, transport: T) -> Self {
        LiveGateway { config, transport }
    }

    fn body(&self, req: &ChatRequest) -> String {
        json!({
            "model": self.config.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        })
        .to_string()
    }
}

fn parse_response(body: &str) -> Result<Completion, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))?;
    let n = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    Ok(Completion {
        text: text.to_string(),
        usage: Usage { prompt_tokens: n("/usage/prompt_tokens"), completion_tokens: n("/usage/completion_tokens") },
    })
}

impl<T: HttpTransport> LlmGateway for LiveGateway<T> {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let body = self.body(req);
        let mut headers = Vec::new();
        if let Some(key) = &self.config.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let mut attempt = 0;
        loop {
            let last = attempt >= self.config.max_retries;
            let err = match self.transport.post_json(&self.config.endpoint, &headers, &body, self.config.timeout) {
                Ok((status, text)) if (200..300).contains(&status) => return parse_response(&text),
                Ok((status, text)) if status == 429 || status >= 500 => LlmError::Status { status, body: text },
                Ok((status, text)) => return Err(LlmError::Status { status, body: text }),
                Err(e) => LlmError::Transport(e.message),
            };
            if last {
                return Err(err);
            }
            tracing::warn!(tag = %req.tag, attempt, "transient LLM failure: {err}");
            std::thread::sleep(self.config.backoff * 2u32.pow(attempt));
            attempt += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    use super::*;

    struct Scripted {
        replies: Mutex<Vec<Result<(u16, String), TransportError>>>,
        calls: AtomicUsize,
    }

    impl HttpTransport for Scripted {
        fn post_json(&self, _: &str, _: &[(String, String)], _: &str, _: Duration) -> Result<(u16, String), TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"content": text}}], "usage": {"prompt_tokens": 7, "completion_tokens": 3}}).to_string()
    }

    fn fast(cfg: &mut LiveConfig) {
        cfg.backoff = Duration::from_millis(1);
    }

    #[test]
    fn retries_transient_failures_then_succeeds() {
        let t = Scripted {
            replies: Mutex::new(vec![
                Err(TransportError { message: "timed out".into() }),
                Ok((503, "busy".into())),
                Ok((200, ok_body("hi"))),
            ]),
            calls: AtomicUsize::new(0),
        };
        let mut cfg = LiveConfig::new("http://x/v1/chat/completions", "m");
        fast(&mut cfg);
        let g = LiveGateway::new(cfg, t);
        let out = g.complete(&ChatRequest::new("t", "s", "u")).unwrap();
        assert_eq!(out.text, "hi");
        assert_eq!(out.usage.prompt_tokens, 7);
        assert_eq!(g.transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_two_retries() {
        let t = Scripted {
            replies: Mutex::new((0..5).map(|_| Err(TransportError { message: "timed out".into() })).collect()),
            calls: AtomicUsize::new(0),
        };
        let mut cfg = LiveConfig::new("http://x", "m");
        fast(&mut cfg);
        let g = LiveGateway::new(cfg, t);
        assert!(matches!(g.complete(&ChatRequest::new("t", "s", "u")), Err(LlmError::Transport(_))));
        assert_eq!(g.transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Scripted { replies: Mutex::new(vec![Ok((401, "no".into()))]), calls: AtomicUsize::new(0) };
        let g = LiveGateway::new(LiveConfig::new("http://x", "m"), t);
        assert!(matches!(g.complete(&ChatRequest::new("t", "s", "u")), Err(LlmError::Status { status: 401, .. })));
    }

    #[test]
    fn wire_round_trip_against_local_stub() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let reply = ok_body("canned body");
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            (String::from_utf8(body).unwrap(), auth)
        });
        let mut cfg = LiveConfig::new(format!("http://{addr}/v1/chat/completions"), "stub-model");
        cfg.api_key = Some("k".into());
        let g = LiveGateway::new(cfg, ReqwestTransport::new().unwrap());
        let out = g.complete(&ChatRequest::new("gen", "sys", "user text")).unwrap();
        assert_eq!(out.text, "canned body");
        let (body, auth) = server.join().unwrap();
        let sent: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(sent["model"], "stub-model");
        assert_eq!(sent["messages"][1]["content"], "user text");
        assert!(auth.ends_with("Bearer k"), "{auth}");
    }
}

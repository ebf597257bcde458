//! Extraction of fenced blocks and structured payloads from model replies.

use serde::de::DeserializeOwned;

use crate::llm::{ChatRequest, LlmError, LlmGateway};

/// A fenced block: info string (may be empty) and body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fence<'a> {
    pub info: &'a str,
    pub body: &'a str,
}

/// All complete ```-fenced blocks in order of appearance.
pub fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    let mut base = 0usize;
    while let Some(open) = rest.find("```") {
        let after = open + 3;
        let Some(nl) = rest[after..].find('\n') else { break };
        let info = rest[after..after + nl].trim();
        let body_start = after + nl + 1;
        let Some(close) = find_closing(&rest[body_start..]) else { break };
        let body = &text[base + body_start..base + body_start + close];
        out.push(Fence { info, body });
        let consumed = body_start + close + 3;
        base += consumed;
        rest = &text[base..];
    }
    out
}

// A closing fence starts a line.
fn find_closing(s: &str) -> Option<usize> {
    if s.starts_with("```") {
        return Some(0);
    }
    s.match_indices("\n```").map(|(i, _)| i + 1).next()
}

/// Body of the first fenced block, without its trailing newline.
pub fn first_code_block(text: &str) -> Option<String> {
    fences(text).first().map(|f| f.body.trim_end_matches(['\n', '\r']).to_string())
}

/// Parses a JSON payload: the first fenced block tagged `json`, else the
/// first fenced block, else the whole reply.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let blocks = fences(text);
    let candidate = blocks
        .iter()
        .find(|f| f.info.eq_ignore_ascii_case("json"))
        .or(blocks.first())
        .map(|f| f.body)
        .unwrap_or(text);
    serde_json::from_str(candidate.trim()).map_err(|e| e.to_string())
}

/// Outcome of a request whose reply must parse.
#[derive(Debug, Clone, PartialEq)]
pub enum Asked<T> {
    Parsed(T),
    /// Both attempts failed to parse; holds the last raw reply and error.
    Unparsed { raw: String, error: String },
}

/// Sends `req`; if `parse` rejects the reply, asks once more with the parse
/// error appended to the user message. Transport failures propagate.
pub fn ask_with_retry<T>(
    llm: &dyn LlmGateway,
    req: ChatRequest,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Asked<T>, LlmError> {
    let first = llm.complete(&req)?;
    let error = match parse(&first.text) {
        Ok(v) => return Ok(Asked::Parsed(v)),
        Err(e) => e,
    };
    tracing::debug!(tag = %req.tag, "reply rejected, retrying: {error}");
    let retry = ChatRequest { user: retry_message(&req.user, &error), ..req };
    let second = llm.complete(&retry)?;
    Ok(match parse(&second.text) {
        Ok(v) => Asked::Parsed(v),
        Err(error) => Asked::Unparsed { raw: second.text, error },
    })
}

pub fn retry_message(user: &str, error: &str) -> String {
    format!("{user}\n\nYour previous reply was rejected: {error}\nReply again in exactly the requested format.")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_of_two_blocks() {
        let t = "intro\n```st\nA;\n```\nmore\n```\nB;\n```\n";
        let f = fences(t);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].info, "st");
        assert_eq!(first_code_block(t).unwrap(), "A;");
        assert_eq!(f[1].body, "B;\n");
    }

    #[test]
    fn unterminated_fence_is_ignored() {
        assert!(first_code_block("```st\nA;\n").is_none());
        assert!(first_code_block("just prose").is_none());
    }

    #[test]
    fn json_payloads() {
        let v: Vec<String> = parse_json("Here:\n```json\n[\"A\", \"B\"]\n```").unwrap();
        assert_eq!(v, ["A", "B"]);
        let v: Vec<u32> = parse_json(" [1,2] ").unwrap();
        assert_eq!(v, [1, 2]);
        assert!(parse_json::<Vec<u32>>("no idea").is_err());
    }
}

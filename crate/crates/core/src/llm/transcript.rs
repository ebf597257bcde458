//! Line-delimited transcripts of recorded interactions.
//!
//! Each line is one JSON object:
//!
//! ```text
//! {"tag":"plan","digest":"<sha256 hex>","system":"...","user":"...","text":"...",
//!  "usage":{"prompt_tokens":12,"completion_tokens":40}}
//! ```
//!
//! Records are keyed by `(tag, digest)`, so reordering or skipping stages
//! does not invalidate a transcript.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{content_digest, ChatRequest, Completion, LlmError, LlmGateway, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub tag: String,
    pub digest: String,
    pub system: String,
    pub user: String,
    pub text: String,
    pub usage: Usage,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, LlmError> {
    let err = |message: String| LlmError::Transcript { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TranscriptRecord =
            serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

type Key = (String, String);

/// Answers only from a transcript. Never touches the network.
#[derive(Debug)]
pub struct ReplayGateway {
    records: HashMap<Key, TranscriptRecord>,
}

impl ReplayGateway {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Self::from_records(read_transcript(path)?)
    }

    /// Duplicate keys with identical content keep the first answer; a
    /// duplicate key with different content is a collision.
    pub fn from_records(records: Vec<TranscriptRecord>) -> Result<Self, LlmError> {
        let mut map: HashMap<Key, TranscriptRecord> = HashMap::new();
        for rec in records {
            let key = (rec.tag.clone(), rec.digest.clone());
            match map.get(&key) {
                Some(prev) if prev.system != rec.system || prev.user != rec.user => {
                    return Err(LlmError::DigestCollision { tag: rec.tag, digest: rec.digest });
                }
                Some(_) => {}
                None => {
                    map.insert(key, rec);
                }
            }
        }
        Ok(ReplayGateway { records: map })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl LlmGateway for ReplayGateway {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let digest = req.digest();
        let key = (req.tag.clone(), digest.clone());
        let rec = self
            .records
            .get(&key)
            .ok_or_else(|| LlmError::Unrecorded { tag: req.tag.clone(), digest: digest.clone() })?;
        if rec.system != req.system || rec.user != req.user {
            return Err(LlmError::DigestCollision { tag: req.tag.clone(), digest });
        }
        Ok(Completion { text: rec.text.clone(), usage: rec.usage })
    }
}

struct RecorderState {
    out: BufWriter<File>,
    seen: HashMap<Key, (String, String)>,
}

/// Forwards to `inner` and appends every interaction to a transcript.
pub struct RecordingGateway<G> {
    inner: G,
    path: PathBuf,
    state: Mutex<RecorderState>,
}

impl<G: LlmGateway> RecordingGateway<G> {
    /// Opens `path` for appending. Records already in the file take part in
    /// collision checks.
    pub fn open(inner: G, path: &Path) -> Result<Self, LlmError> {
        let err = |e: std::io::Error| LlmError::Transcript { path: path.display().to_string(), message: e.to_string() };
        let mut seen = HashMap::new();
        if path.exists() {
            for rec in read_transcript(path)? {
                seen.insert((rec.tag, rec.digest), (rec.system, rec.user));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        Ok(RecordingGateway {
            inner,
            path: path.to_path_buf(),
            state: Mutex::new(RecorderState { out: BufWriter::new(file), seen }),
        })
    }
}

impl<G: LlmGateway> LlmGateway for RecordingGateway<G> {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let digest = content_digest(&req.system, &req.user);
        let key = (req.tag.clone(), digest.clone());
        {
            let state = self.state.lock().unwrap();
            if let Some((system, user)) = state.seen.get(&key) {
                if *system != req.system || *user != req.user {
                    return Err(LlmError::DigestCollision { tag: req.tag.clone(), digest });
                }
            }
        }
        let out = self.inner.complete(req)?;
        let rec = TranscriptRecord {
            tag: req.tag.clone(),
            digest,
            system: req.system.clone(),
            user: req.user.clone(),
            text: out.text.clone(),
            usage: out.usage,
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        let mut state = self.state.lock().unwrap();
        let werr = |e: std::io::Error| LlmError::Transcript { path: self.path.display().to_string(), message: e.to_string() };
        writeln!(state.out, "{line}").map_err(werr)?;
        state.out.flush().map_err(werr)?;
        state.seen.insert(key, (rec.system, rec.user));
        Ok(out)
    }
}

//! Append-only record of every backend exchange in a run, and its JSONL
//! serialization.
//!
//! Each exchange line carries digests of the request and response plus the
//! bodies themselves keyed by digest. The last line of a transcript file is a
//! summary of the [`RunOutcome`].

use crate::backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, ChatResponse};
use crate::pipeline::RunOutcome;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Who issued a backend call. `Baseline` is the single-prompt mode, not an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Manager,
    PromptMaker,
    Executor,
    Verifier,
    Finalizer,
    Baseline,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Manager => "manager",
            AgentKind::PromptMaker => "prompt_maker",
            AgentKind::Executor => "executor",
            AgentKind::Verifier => "verifier",
            AgentKind::Finalizer => "finalizer",
            AgentKind::Baseline => "baseline",
        })
    }
}

pub mod flags {
    pub const REASK: &str = "reask";
    pub const CONFIRM: &str = "confirm";
    pub const CONFIRM_FALLBACK: &str = "confirm_fallback";
    pub const PARSE_FALLBACK: &str = "parse_fallback";
    pub const PARSE_FAILED: &str = "parse_failed";
    pub const NO_CODE: &str = "no_code";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub run_id: String,
    pub step: u64,
    pub agent: AgentKind,
    pub task_ordinal: Option<usize>,
    pub iteration: Option<u32>,
    pub request_digest: String,
    pub response_digest: Option<String>,
    pub latency_seconds: f64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub error: Option<String>,
    pub flags: BTreeSet<String>,
    pub bodies: BTreeMap<String, String>,
}

impl TranscriptEntry {
    pub fn request_body(&self) -> Option<&str> {
        self.bodies.get(&self.request_digest).map(String::as_str)
    }

    pub fn response_body(&self) -> Option<&str> {
        self.response_digest
            .as_ref()
            .and_then(|d| self.bodies.get(d))
            .map(String::as_str)
    }

    /// The request this entry recorded, decoded from its stored body.
    pub fn request(&self) -> Option<ChatRequest> {
        serde_json::from_str(self.request_body()?).ok()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.contains(flag)
    }
}

pub fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Request parameters applied to every call in a session.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestSettings {
    pub model: String,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
}

impl Default for RequestSettings {
    fn default() -> Self {
        Self {
            model: crate::backend::DEFAULT_MODEL.to_string(),
            temperature: None,
            max_output_tokens: None,
        }
    }
}

/// Which agent is speaking and where in the run it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallSite {
    pub agent: AgentKind,
    pub task_ordinal: Option<usize>,
    pub iteration: Option<u32>,
}

impl CallSite {
    pub fn new(agent: AgentKind) -> Self {
        Self {
            agent,
            task_ordinal: None,
            iteration: None,
        }
    }

    pub fn task(agent: AgentKind, ordinal: usize, iteration: u32) -> Self {
        Self {
            agent,
            task_ordinal: Some(ordinal),
            iteration: Some(iteration),
        }
    }
}

/// One run's view of a backend. Every call, successful or not, appends
/// exactly one [`TranscriptEntry`].
pub struct Session<'a> {
    run_id: String,
    backend: &'a dyn ChatBackend,
    settings: RequestSettings,
    entries: Vec<TranscriptEntry>,
}

impl<'a> Session<'a> {
    pub fn new(
        run_id: impl Into<String>,
        backend: &'a dyn ChatBackend,
        settings: RequestSettings,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            backend,
            settings,
            entries: Vec::new(),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn call(
        &mut self,
        site: CallSite,
        messages: Vec<ChatMessage>,
        flags: &[&str],
    ) -> Result<ChatResponse, BackendError> {
        let request = ChatRequest {
            model: self.settings.model.clone(),
            messages,
            temperature: self.settings.temperature,
            max_output_tokens: self.settings.max_output_tokens,
        };
        let request_body =
            serde_json::to_string(&request).expect("chat request serializes to JSON");
        let request_digest = digest(&request_body);
        let mut bodies = BTreeMap::new();
        bodies.insert(request_digest.clone(), request_body);

        let result = request
            .validate()
            .and_then(|_| self.backend.complete(&request));

        let mut entry = TranscriptEntry {
            run_id: self.run_id.clone(),
            step: self.entries.len() as u64 + 1,
            agent: site.agent,
            task_ordinal: site.task_ordinal,
            iteration: site.iteration,
            request_digest,
            response_digest: None,
            latency_seconds: 0.0,
            prompt_tokens: None,
            completion_tokens: None,
            error: None,
            flags: flags.iter().map(|f| f.to_string()).collect(),
            bodies,
        };
        match &result {
            Ok(resp) => {
                let d = digest(&resp.content);
                entry.bodies.insert(d.clone(), resp.content.clone());
                entry.response_digest = Some(d);
                entry.latency_seconds = resp.latency_seconds;
                entry.prompt_tokens = resp.prompt_tokens;
                entry.completion_tokens = resp.completion_tokens;
            }
            Err(e) => entry.error = Some(e.to_string()),
        }
        self.entries.push(entry);
        result
    }

    /// Tags the most recent exchange.
    pub fn flag_last(&mut self, flag: &str) {
        if let Some(last) = self.entries.last_mut() {
            last.flags.insert(flag.to_string());
        }
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<TranscriptEntry> {
        self.entries
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("transcript line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("entry step {step} belongs to run {found}, expected {expected}")]
    ForeignEntry {
        step: u64,
        found: String,
        expected: String,
    },
    #[error("transcript has no summary line")]
    MissingSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Exchange(TranscriptEntry),
    Summary(RunOutcome),
}

/// Writes `entries` followed by a summary of `outcome`, one JSON object per line.
pub fn write_transcript(
    outcome: &RunOutcome,
    entries: &[TranscriptEntry],
    path: impl AsRef<Path>,
) -> Result<(), TranscriptError> {
    let path = path.as_ref();
    if let Some(e) = entries.iter().find(|e| e.run_id != outcome.run_id) {
        return Err(TranscriptError::ForeignEntry {
            step: e.step,
            found: e.run_id.clone(),
            expected: outcome.run_id.clone(),
        });
    }
    let io_err = |source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    let lines = entries
        .iter()
        .cloned()
        .map(Line::Exchange)
        .chain(std::iter::once(Line::Summary(outcome.clone())));
    for (i, line) in lines.enumerate() {
        serde_json::to_writer(&mut out, &line).map_err(|source| TranscriptError::Json {
            line: i + 1,
            source,
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_transcript(
    path: impl AsRef<Path>,
) -> Result<(Vec<TranscriptEntry>, RunOutcome), TranscriptError> {
    let path = path.as_ref();
    let io_err = |source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(fs::File::open(path).map_err(io_err)?);
    let mut entries = Vec::new();
    let mut summary = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|source| TranscriptError::Json {
            line: i + 1,
            source,
        })? {
            Line::Exchange(e) => entries.push(e),
            Line::Summary(o) => summary = Some(o),
        }
    }
    Ok((entries, summary.ok_or(TranscriptError::MissingSummary)?))
}

//! Transport layer for agent calls: HTTP, transcripts, record, and replay.
//!
//! Providers return raw response text; parsing and validation happen a layer
//! up. The recording wrapper appends every successful exchange to a
//! JSON-lines transcript, and the replay provider answers future runs from
//! those transcripts keyed by request hash, so an evaluation can be re-run
//! byte-for-byte without touching the network.
//!
//! API keys are read from the environment at request time, only ever placed
//! in the Authorization header, and never written to transcripts or logs.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompts::ChatPrompt;

/// Network-level failure; retried once by the agent layer like any other
/// failed attempt.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

/// A completion backend. Implementations must be safe to call from several
/// forecast-origin workers at once.
pub trait LlmProvider: Send + Sync {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError>;
    /// Short identifier used in logs and transcript file names.
    fn name(&self) -> &str;
}

impl LlmProvider for Box<dyn LlmProvider> {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        self.as_ref().complete(prompt)
    }
    fn name(&self) -> &str {
        self.as_ref().name()
    }
}

/// One recorded exchange, stored as a single JSON line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub request_hash: String,
    pub prompt: String,
    pub raw_response: String,
    pub timestamp: String,
}

/// Append-only JSON-lines transcript writer. Appends are serialized through
/// a mutex so concurrent origin workers cannot interleave lines.
pub struct TranscriptStore {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl TranscriptStore {
    pub fn create<P: AsRef<Path>>(path: P) -> Result<Self, std::io::Error> {
        if let Some(parent) = path.as_ref().parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        Ok(TranscriptStore {
            path: path.as_ref().to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, transcript: &Transcript) -> Result<(), std::io::Error> {
        let line = serde_json::to_string(transcript).expect("transcript serializes");
        let mut writer = self.writer.lock().expect("transcript writer lock");
        writeln!(writer, "{line}")?;
        writer.flush()
    }
}

/// Reads every transcript line from a JSON-lines file.
pub fn read_transcripts<P: AsRef<Path>>(path: P) -> Result<Vec<Transcript>, std::io::Error> {
    let file = File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transcript = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{} line {}: {e}", path.as_ref().display(), i + 1),
            )
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Wraps a provider and records every successful exchange.
///
/// Transport failures produce nothing to replay and are not recorded;
/// malformed response bodies are recorded as-is, so a replay reproduces the
/// original parse failure and retry path faithfully.
pub struct RecordingProvider<P> {
    inner: P,
    store: TranscriptStore,
}

impl<P: LlmProvider> RecordingProvider<P> {
    pub fn new(inner: P, store: TranscriptStore) -> Self {
        RecordingProvider { inner, store }
    }
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        let raw = self.inner.complete(prompt)?;
        let transcript = Transcript {
            request_hash: prompt.request_hash(),
            prompt: prompt.text(),
            raw_response: raw.clone(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        self.store
            .append(&transcript)
            .map_err(|e| TransportError(format!("failed to record transcript: {e}")))?;
        Ok(raw)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Replays recorded responses keyed by request hash.
///
/// Responses for the same hash are returned in recorded order, which makes
/// a recorded parse-failure-then-retry sequence replay identically.
pub struct ReplayProvider {
    responses: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayProvider {
    pub fn from_transcripts(transcripts: Vec<Transcript>) -> Self {
        let mut responses: HashMap<String, VecDeque<String>> = HashMap::new();
        for t in transcripts {
            responses.entry(t.request_hash).or_default().push_back(t.raw_response);
        }
        ReplayProvider {
            responses: Mutex::new(responses),
        }
    }

    /// Loads every `.jsonl` file in `dir` whose name starts with `prefix`,
    /// in file-name order.
    pub fn from_dir(dir: &Path, prefix: &str) -> Result<Self, std::io::Error> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.extension().is_some_and(|ext| ext == "jsonl")
                    && p.file_name()
                        .is_some_and(|n| n.to_string_lossy().starts_with(prefix))
            })
            .collect();
        paths.sort();
        let mut transcripts = Vec::new();
        for path in paths {
            transcripts.extend(read_transcripts(&path)?);
        }
        Ok(Self::from_transcripts(transcripts))
    }
}

impl LlmProvider for ReplayProvider {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        let hash = prompt.request_hash();
        let mut responses = self.responses.lock().expect("replay map lock");
        match responses.get_mut(&hash).and_then(VecDeque::pop_front) {
            Some(raw) => Ok(raw),
            None => Err(TransportError(format!(
                "no recorded response for request {hash}"
            ))),
        }
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// OpenAI-compatible chat-completions client.
///
/// Sends the instruction sections as the system message and the JSON payload
/// as the user message. The API key is resolved from the environment variable
/// named in the config; an empty name means no Authorization header.
pub struct HttpChatProvider {
    endpoint_url: String,
    model_name: String,
    temperature: f64,
    max_tokens: u32,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(
        endpoint_url: String,
        model_name: String,
        temperature: f64,
        max_tokens: u32,
        api_key_env: String,
    ) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| TransportError(format!("failed to build HTTP client: {e}")))?;
        Ok(HttpChatProvider {
            endpoint_url,
            model_name,
            temperature,
            max_tokens,
            api_key_env,
            client,
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

impl LlmProvider for HttpChatProvider {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, TransportError> {
        let body = ChatCompletionRequest {
            model: &self.model_name,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &prompt.system,
                },
                ChatMessage {
                    role: "user",
                    content: &prompt.user,
                },
            ],
        };
        let mut request = self.client.post(&self.endpoint_url).json(&body);
        if !self.api_key_env.is_empty() {
            let key = std::env::var(&self.api_key_env).map_err(|_| {
                TransportError(format!(
                    "API key environment variable {} is not set",
                    self.api_key_env
                ))
            })?;
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| TransportError(format!("request failed: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportError(format!(
                "endpoint returned HTTP {status}"
            )));
        }
        let parsed: ChatCompletionResponse = response
            .json()
            .map_err(|e| TransportError(format!("malformed completion envelope: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError("completion had no choices".into()))
    }

    fn name(&self) -> &str {
        "openai_compatible"
    }
}

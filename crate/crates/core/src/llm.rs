//! Text-generation backends.
//!
//! [`HttpBackend`] talks to a chat-completions endpoint. [`ScriptedBackend`]
//! serves a fixed queue of responses and [`ReplayBackend`] serves a recorded
//! transcript keyed by prompt hash, so whole runs can be reproduced offline.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompts::PromptText;
use crate::text::sha256_hex;

pub const DEFAULT_CANDIDATES: usize = 4;
pub const CANDIDATE_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const TRANSCRIPT_FORMAT: &str = "transcript/1";
pub const API_KEY_ENV: &str = "TLAPROVE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("backend rejected the request ({status}): {message}")]
    BackendRejected { status: u16, message: String },
    #[error("all candidates failed: {0}")]
    AllCandidatesFailed(String),
    #[error("no transcript entry for prompt {prompt_hash}")]
    TranscriptMismatch { prompt_hash: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

pub type Result<T, E = LlmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: PromptText,
    pub n_candidates: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed_hint: Option<u64>,
}

impl GenerationRequest {
    /// `n` sampled candidates.
    pub fn candidates(prompt: PromptText, n: usize) -> Self {
        Self {
            prompt,
            n_candidates: n,
            temperature: CANDIDATE_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed_hint: None,
        }
    }

    /// One greedy completion.
    pub fn single(prompt: PromptText) -> Self {
        Self {
            prompt,
            n_candidates: 1,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed_hint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(LlmError::InvalidRequest("n_candidates must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be non-negative".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if self.prompt.text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        Ok(())
    }

    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.prompt.text)
    }
}

pub fn prompt_hash(prompt_text: &str) -> String {
    sha256_hex(prompt_text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub candidates: Vec<String>,
    pub backend_id: String,
    pub latency_ms: Vec<u64>,
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> String;

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        (**self).generate(req)
    }
}

// ---------------------------------------------------------------------------
// Scripted

/// Serves responses from a fixed queue in order, regardless of prompt.
/// A request takes up to `n_candidates` responses; an empty queue is
/// reported as an unreachable backend.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<PromptText>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Every prompt received so far.
    pub fn prompts(&self) -> Vec<PromptText> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        req.validate()?;
        self.prompts
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(req.prompt.clone());
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        if q.is_empty() {
            return Err(LlmError::BackendUnreachable("script exhausted".into()));
        }
        let take = req.n_candidates.min(q.len());
        let candidates: Vec<String> = q.drain(..take).collect();
        Ok(GenerationResult {
            latency_ms: vec![0; candidates.len()],
            candidates,
            backend_id: self.id(),
        })
    }
}

// ---------------------------------------------------------------------------
// Transcripts

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub prompt_hash: String,
    pub prompt_text: String,
    pub responses: Vec<String>,
}

impl TranscriptEntry {
    pub fn new(prompt_text: impl Into<String>, responses: Vec<String>) -> Self {
        let prompt_text = prompt_text.into();
        Self {
            prompt_hash: prompt_hash(&prompt_text),
            prompt_text,
            responses,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptHeader {
    format: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(
            &mut w,
            &TranscriptHeader {
                format: TRANSCRIPT_FORMAT.into(),
            },
        )?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |n: usize, m: String| LlmError::Transcript(format!("line {n}: {m}"));
        let mut lines = BufReader::new(text.as_bytes()).lines().enumerate();
        let mut entries = Vec::new();
        match lines.next() {
            None => return Ok(Self::default()),
            Some((_, l)) => {
                let l = l.map_err(|e| err(1, e.to_string()))?;
                let h: TranscriptHeader = serde_json::from_str(&l).map_err(|e| err(1, e.to_string()))?;
                if h.format != TRANSCRIPT_FORMAT {
                    return Err(err(1, format!("unsupported format {:?}", h.format)));
                }
            }
        }
        for (i, l) in lines {
            let l = l.map_err(|e| err(i + 1, e.to_string()))?;
            if l.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(&l).map_err(|e| err(i + 1, e.to_string()))?;
            if e.prompt_hash != prompt_hash(&e.prompt_text) {
                return Err(err(i + 1, "prompt_hash does not match prompt_text".into()));
            }
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Serves a transcript. Entries sharing a prompt hash are served in order;
/// once they run out the last one repeats.
#[derive(Debug)]
pub struct ReplayBackend {
    by_hash: HashMap<String, Vec<TranscriptEntry>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        let mut by_hash: HashMap<String, Vec<TranscriptEntry>> = HashMap::new();
        for e in transcript.entries {
            by_hash.entry(e.prompt_hash.clone()).or_default().push(e);
        }
        Self {
            by_hash,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Transcript::load(path).map(Self::new)
    }
}

impl LlmBackend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        req.validate()?;
        let hash = req.prompt_hash();
        let mismatch = || LlmError::TranscriptMismatch {
            prompt_hash: hash.clone(),
        };
        let entries = self.by_hash.get(&hash).ok_or_else(mismatch)?;
        let idx = {
            let mut cursors = self.cursors.lock().unwrap_or_else(|e| e.into_inner());
            let c = cursors.entry(hash.clone()).or_insert(0);
            let idx = (*c).min(entries.len() - 1);
            *c += 1;
            idx
        };
        let entry = &entries[idx];
        if entry.prompt_text != req.prompt.text {
            return Err(mismatch());
        }
        if entry.responses.is_empty() {
            return Err(LlmError::AllCandidatesFailed("transcript entry has no responses".into()));
        }
        let candidates: Vec<String> = entry.responses.iter().take(req.n_candidates).cloned().collect();
        Ok(GenerationResult {
            latency_ms: vec![0; candidates.len()],
            candidates,
            backend_id: self.id(),
        })
    }
}

/// Wraps a backend and records every successful exchange.
pub struct RecordingBackend<B: LlmBackend> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            entries: self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone(),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn id(&self) -> String {
        format!("recording:{}", self.inner.id())
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        let result = self.inner.generate(req)?;
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(TranscriptEntry::new(req.prompt.text.clone(), result.candidates.clone()));
        Ok(result)
    }
}

// ---------------------------------------------------------------------------
// HTTP

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
            retries: 2,
            backoff: Duration::from_secs(1),
            max_in_flight: DEFAULT_CANDIDATES,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::BackendUnreachable(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn attempt(&self, req: &GenerationRequest, seed: Option<u64>) -> Result<String> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt.text,
            }],
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            seed,
        };
        let mut http = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| LlmError::BackendUnreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let message = resp.text().unwrap_or_default();
            return Err(LlmError::BackendRejected {
                status: status.as_u16(),
                message: message.chars().take(500).collect(),
            });
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| LlmError::AllCandidatesFailed(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| LlmError::AllCandidatesFailed("empty completion".into()))
    }

    fn retryable(e: &LlmError) -> bool {
        match e {
            LlmError::BackendUnreachable(_) => true,
            LlmError::BackendRejected { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    fn one_candidate(&self, req: &GenerationRequest, index: usize) -> (Result<String>, u64) {
        let started = Instant::now();
        let seed = req.seed_hint.map(|s| s.wrapping_add(index as u64));
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            let r = self.attempt(req, seed);
            match &r {
                Err(e) if attempt < self.config.retries && Self::retryable(e) => {
                    log::debug!("candidate {index}: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                _ => return (r, started.elapsed().as_millis() as u64),
            }
        }
    }
}

/// One candidate's text and latency in milliseconds.
type Slot = (Result<String>, u64);

impl LlmBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult> {
        req.validate()?;
        let n = req.n_candidates;
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Slot>>> = Mutex::new(vec![None; n]);
        let workers = self.config.max_in_flight.clamp(1, n);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let r = self.one_candidate(req, i);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                });
            }
        });
        let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
        let mut candidates = Vec::new();
        let mut latency_ms = Vec::new();
        let mut errors = Vec::new();
        for slot in slots.into_iter().flatten() {
            match slot {
                (Ok(c), ms) => {
                    candidates.push(c);
                    latency_ms.push(ms);
                }
                (Err(e), _) => errors.push(e),
            }
        }
        if candidates.is_empty() {
            return Err(summarize(errors));
        }
        for e in &errors {
            log::warn!("candidate failed: {e}");
        }
        Ok(GenerationResult {
            candidates,
            backend_id: self.id(),
            latency_ms,
        })
    }
}

fn summarize(errors: Vec<LlmError>) -> LlmError {
    if errors.iter().all(|e| matches!(e, LlmError::BackendUnreachable(_))) {
        return errors
            .into_iter()
            .next()
            .unwrap_or_else(|| LlmError::BackendUnreachable("no candidates".into()));
    }
    if errors.iter().all(|e| matches!(e, LlmError::BackendRejected { .. })) {
        return errors.into_iter().next().expect("nonempty");
    }
    LlmError::AllCandidatesFailed(errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
}

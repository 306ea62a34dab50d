//! Chat-completion access behind one interface, with HTTP, scripted mock and
//! transcript-replay backends. Every call is appended to the run transcript.

mod http;
mod mock;
mod replay;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockRule, MockScript};
pub use replay::ReplayBackend;

pub const DEFAULT_MAX_TOKENS: u32 = 500;
pub const DEFAULT_MODEL: &str = "qwen3-8b";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Actor,
    Critic,
    Refiner,
    Extractor,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Actor => "actor",
            Role::Critic => "critic",
            Role::Refiner => "refiner",
            Role::Extractor => "extractor",
        }
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            Role::Actor => 0.6,
            Role::Critic => 0.1,
            Role::Refiner => 0.2,
            Role::Extractor => 0.0,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("no recorded response left for {role} request {fingerprint}")]
    ReplayExhausted { role: Role, fingerprint: String },
    #[error("replayed failure: {0}")]
    Replayed(String),
    #[error("no mock rule matches {role} request {fingerprint}")]
    MockMiss { role: Role, fingerprint: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
    pub role: Role,
}

impl ChatRequest {
    /// Builds a request with the role's default temperature and 500 max tokens.
    pub fn new(
        role: Role,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Result<Self, LlmError> {
        let req = Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: role.default_temperature(),
            max_tokens: DEFAULT_MAX_TOKENS,
            model: DEFAULT_MODEL.to_string(),
            role,
        };
        req.check()?;
        Ok(req)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, LlmError> {
        self.temperature = temperature;
        self.check()?;
        Ok(self)
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Result<Self, LlmError> {
        self.max_tokens = max_tokens;
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), LlmError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stable hash of (role, user prompt). System prompts are constant per
    /// role and stay out of the key.
    pub fn fingerprint(&self) -> String {
        fingerprint(self.role, &self.user_prompt)
    }
}

pub fn fingerprint(role: Role, user_prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(role.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(user_prompt.as_bytes());
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Backend selection as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Http(HttpConfig),
    Mock { script: PathBuf },
    Replay { transcript: PathBuf },
}

pub trait ChatBackend: Send {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError>;

    /// Whether wall-clock latency is meaningful for this backend.
    fn records_latency(&self) -> bool {
        false
    }
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub role: Role,
    pub fingerprint: String,
    pub system_prompt: String,
    pub user_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let text = std::fs::read_to_string(path).map_err(|e| LlmError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LlmError::File {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Front door for all completions in a run.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    transcript: Vec<TranscriptEntry>,
    sink: Option<BufWriter<File>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend,
            transcript: Vec::new(),
            sink: None,
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let backend: Box<dyn ChatBackend> = match cfg {
            BackendConfig::Http(http) => Box::new(HttpBackend::new(http.clone())?),
            BackendConfig::Mock { script } => Box::new(MockBackend::from_file(script)?),
            BackendConfig::Replay { transcript } => Box::new(ReplayBackend::from_file(transcript)?),
        };
        Ok(Self::new(backend))
    }

    /// Also appends every entry to `path` as JSON lines.
    pub fn with_transcript_file(mut self, path: &Path) -> Result<Self, LlmError> {
        let file = File::create(path).map_err(|e| LlmError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.sink = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn complete(&mut self, req: &ChatRequest) -> Result<String, LlmError> {
        let started = Instant::now();
        let result = self.backend.complete(req);
        let latency_ms = self
            .backend
            .records_latency()
            .then(|| started.elapsed().as_millis() as u64);
        let entry = TranscriptEntry {
            seq: self.transcript.len() as u64,
            role: req.role,
            fingerprint: req.fingerprint(),
            system_prompt: req.system_prompt.clone(),
            user_prompt: req.user_prompt.clone(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
            latency_ms,
        };
        if let Some(sink) = &mut self.sink {
            let line = serde_json::to_string(&entry).expect("transcript entry serializes");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::warn!("failed to append transcript entry: {e}");
            }
        }
        self.transcript.push(entry);
        result
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn calls(&self) -> usize {
        self.transcript.len()
    }
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("calls", &self.transcript.len())
            .finish()
    }
}

//! Boundary to external model services.
//!
//! Everything that talks to a chat model or an embedding model goes through
//! [`Gateway`]. Chat backends implement [`ChatModel`]; embedders implement
//! [`Embedder`]. Sessions can be recorded to a JSONL transcript and replayed
//! later without network access: replayed responses are looked up by a
//! SHA-256 fingerprint of the request messages.

mod hashing;
mod http;
mod scripted;
mod transcript;

use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::json::to_canonical_compact;
use crate::text::estimate_tokens;

pub use hashing::HashingEmbedder;
pub use http::{HttpChat, HttpEmbedder, HttpSettings, API_KEY_ENV, BASE_URL_ENV};
pub use scripted::{FnChat, ScriptedChat};
pub use transcript::{
    RecordingChat, RecordingEmbedder, ReplayChat, ReplayEmbedder, Transcript, TranscriptEntry, TranscriptTokens,
};

/// Output budget for document graph construction calls.
pub const INGESTION_MAX_TOKENS: u32 = 8192;
/// Output budget for question-time calls.
pub const QA_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("no recorded response for request fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no chat model configured: {0}")]
    NotConfigured(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// Encoded image bytes (PNG or JPEG).
    pub images: Vec<Vec<u8>>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), images: Vec::new() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self::new(Role::Tool, content)
    }

    pub fn with_image(mut self, image: Vec<u8>) -> Self {
        self.images.push(image);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Serialize)]
struct FingerprintMessage<'a> {
    role: &'a str,
    content: &'a str,
    images: Vec<String>,
}

impl ChatRequest {
    /// Temperature 0 and the question-time output budget.
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self { messages, temperature: 0.0, max_tokens: QA_MAX_TOKENS }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must not be empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be > 0".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON of the messages, with each image
    /// replaced by its own SHA-256 digest.
    pub fn fingerprint(&self) -> String {
        let messages: Vec<FingerprintMessage<'_>> = self
            .messages
            .iter()
            .map(|m| FingerprintMessage {
                role: m.role.as_str(),
                content: &m.content,
                images: m.images.iter().map(|img| hex::encode(Sha256::digest(img))).collect(),
            })
            .collect();
        let canonical = to_canonical_compact(&messages).expect("fingerprint messages serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Prompt size under the chars/4 estimator.
    pub fn estimated_prompt_tokens(&self) -> u64 {
        self.messages.iter().map(|m| estimate_tokens(&m.content)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales to unit L2 norm; a zero vector is left unchanged.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= norm);
        }
        self
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait Embedder: Send + Sync {
    /// Stable identifier stored alongside indices built with this embedder.
    fn name(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
    /// Local embedders never touch the network and need no recording.
    fn is_local(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Shared handle to the configured chat model and embedder, with session
/// token accounting.
pub struct Gateway {
    chat: Option<Arc<dyn ChatModel>>,
    embedder: Arc<dyn Embedder>,
    usage: Mutex<Usage>,
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatModel>, embedder: Arc<dyn Embedder>) -> Self {
        Self { chat: Some(chat), embedder, usage: Mutex::new(Usage::default()) }
    }

    /// A gateway with an embedder only; chat calls fail with
    /// [`GatewayError::NotConfigured`].
    pub fn offline(embedder: Arc<dyn Embedder>) -> Self {
        Self { chat: None, embedder, usage: Mutex::new(Usage::default()) }
    }

    /// Wraps the current backends so every exchange is appended to the
    /// transcript at `path`.
    pub fn record_session(self, path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let transcript = Arc::new(Transcript::create(path.as_ref())?);
        let chat = self.chat.map(|inner| Arc::new(RecordingChat::new(inner, transcript.clone())) as Arc<dyn ChatModel>);
        let embedder: Arc<dyn Embedder> = if self.embedder.is_local() {
            self.embedder
        } else {
            Arc::new(RecordingEmbedder::new(self.embedder, transcript))
        };
        Ok(Self { chat, embedder, usage: Mutex::new(Usage::default()) })
    }

    /// Serves chat (and non-local embedding) responses from a transcript.
    /// Never performs network calls.
    pub fn replay_session(path: impl AsRef<Path>, embedder: Arc<dyn Embedder>) -> Result<Self, GatewayError> {
        let entries = Transcript::load(path.as_ref())?;
        let chat: Arc<dyn ChatModel> = Arc::new(ReplayChat::new(entries.clone()));
        let embedder: Arc<dyn Embedder> = if embedder.is_local() {
            embedder
        } else {
            Arc::new(ReplayEmbedder::new(embedder.name(), embedder.dimension(), entries))
        };
        Ok(Self::new(chat, embedder))
    }

    pub fn has_chat(&self) -> bool {
        self.chat.is_some()
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let chat = self
            .chat
            .as_ref()
            .ok_or_else(|| GatewayError::NotConfigured("set an API endpoint or use a replay transcript".into()))?;
        let response = chat.complete(request)?;
        let mut usage = self.usage.lock().expect("usage lock");
        usage.calls += 1;
        usage.prompt_tokens += response.prompt_tokens;
        usage.completion_tokens += response.completion_tokens;
        Ok(response)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("embed requires at least one text".into()));
        }
        let vectors = self.embedder.embed(texts)?;
        if vectors.len() != texts.len() {
            return Err(GatewayError::Transport(format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        let expected = self.embedder.dimension();
        if let Some(bad) = vectors.iter().find(|v| v.dimension() != expected) {
            return Err(GatewayError::DimensionMismatch { expected, got: bad.dimension() });
        }
        Ok(vectors)
    }

    pub fn usage(&self) -> Usage {
        *self.usage.lock().expect("usage lock")
    }
}

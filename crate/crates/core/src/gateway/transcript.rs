//! JSONL transcripts of model exchanges, one `{fingerprint, response, tokens}`
//! object per line.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatModel, ChatRequest, ChatResponse, Embedder, EmbeddingVector, GatewayError};
use crate::json::to_canonical_compact;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptTokens {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub response: String,
    pub tokens: TranscriptTokens,
}

impl TranscriptEntry {
    fn into_chat_response(self) -> ChatResponse {
        ChatResponse {
            content: self.response,
            prompt_tokens: self.tokens.prompt,
            completion_tokens: self.tokens.completion,
        }
    }
}

/// Append-only transcript writer.
pub struct Transcript {
    path: PathBuf,
    file: Mutex<File>,
}

impl Transcript {
    /// Creates (or truncates) the transcript file.
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| io_error(path, e))?;
        }
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        Ok(Self { path: path.to_path_buf(), file: Mutex::new(file) })
    }

    pub fn load(path: &Path) -> Result<Vec<TranscriptEntry>, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(n, line)| {
                serde_json::from_str(line)
                    .map_err(|e| GatewayError::Transcript(format!("{}:{}: {e}", path.display(), n + 1)))
            })
            .collect()
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let line = to_canonical_compact(entry).map_err(|e| GatewayError::Transcript(e.to_string()))?;
        let mut file = self.file.lock().expect("transcript lock");
        writeln!(file, "{line}").and_then(|_| file.flush()).map_err(|e| io_error(&self.path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Transcript(format!("{}: {e}", path.display()))
}

/// Responses queued per fingerprint. Repeated identical requests consume
/// recordings in order; the last recording for a fingerprint keeps being
/// served once the earlier ones are used up.
struct ResponseQueue {
    by_fingerprint: Mutex<HashMap<String, VecDeque<TranscriptEntry>>>,
}

impl ResponseQueue {
    fn new(entries: Vec<TranscriptEntry>) -> Self {
        let mut by_fingerprint: HashMap<String, VecDeque<TranscriptEntry>> = HashMap::new();
        for entry in entries {
            by_fingerprint.entry(entry.fingerprint.clone()).or_default().push_back(entry);
        }
        Self { by_fingerprint: Mutex::new(by_fingerprint) }
    }

    fn next(&self, fingerprint: &str) -> Result<TranscriptEntry, GatewayError> {
        let mut map = self.by_fingerprint.lock().expect("replay lock");
        let queue = map
            .get_mut(fingerprint)
            .filter(|q| !q.is_empty())
            .ok_or_else(|| GatewayError::ReplayMiss { fingerprint: fingerprint.to_string() })?;
        if queue.len() > 1 {
            Ok(queue.pop_front().expect("non-empty"))
        } else {
            Ok(queue[0].clone())
        }
    }
}

pub struct ReplayChat {
    queue: ResponseQueue,
}

impl ReplayChat {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self { queue: ResponseQueue::new(entries) }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::new(Transcript::load(path.as_ref())?))
    }
}

impl ChatModel for ReplayChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.queue.next(&request.fingerprint()).map(TranscriptEntry::into_chat_response)
    }
}

pub struct RecordingChat {
    inner: Arc<dyn ChatModel>,
    transcript: Arc<Transcript>,
}

impl RecordingChat {
    pub fn new(inner: Arc<dyn ChatModel>, transcript: Arc<Transcript>) -> Self {
        Self { inner, transcript }
    }
}

impl ChatModel for RecordingChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        self.transcript.append(&TranscriptEntry {
            fingerprint: request.fingerprint(),
            response: response.content.clone(),
            tokens: TranscriptTokens { prompt: response.prompt_tokens, completion: response.completion_tokens },
        })?;
        Ok(response)
    }
}

fn embedding_fingerprint(embedder: &str, text: &str) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        embedder: &'a str,
        text: &'a str,
    }
    let canonical = to_canonical_compact(&Key { embedder, text }).expect("embedding key serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub struct RecordingEmbedder {
    inner: Arc<dyn Embedder>,
    transcript: Arc<Transcript>,
}

impl RecordingEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, transcript: Arc<Transcript>) -> Self {
        Self { inner, transcript }
    }
}

impl Embedder for RecordingEmbedder {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let vectors = self.inner.embed(texts)?;
        let name = self.inner.name();
        for (text, vector) in texts.iter().zip(&vectors) {
            let response =
                serde_json::to_string(&vector.values).map_err(|e| GatewayError::Transcript(e.to_string()))?;
            self.transcript.append(&TranscriptEntry {
                fingerprint: embedding_fingerprint(&name, text),
                response,
                tokens: TranscriptTokens::default(),
            })?;
        }
        Ok(vectors)
    }
}

pub struct ReplayEmbedder {
    name: String,
    dimension: usize,
    queue: ResponseQueue,
}

impl ReplayEmbedder {
    pub fn new(name: String, dimension: usize, entries: Vec<TranscriptEntry>) -> Self {
        Self { name, dimension, queue: ResponseQueue::new(entries) }
    }
}

impl Embedder for ReplayEmbedder {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        texts
            .iter()
            .map(|text| {
                let entry = self.queue.next(&embedding_fingerprint(&self.name, text))?;
                let values: Vec<f64> = serde_json::from_str(&entry.response)
                    .map_err(|e| GatewayError::Transcript(format!("recorded embedding is not a vector: {e}")))?;
                Ok(EmbeddingVector { values })
            })
            .collect()
    }
}

//! OpenAI-compatible HTTP backends.

use std::time::Duration;

use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{ChatMessage, ChatModel, ChatRequest, ChatResponse, Embedder, EmbeddingVector, GatewayError, Role};

pub const API_KEY_ENV: &str = "LADRAG_API_KEY";
pub const BASE_URL_ENV: &str = "LADRAG_BASE_URL";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Clone, Debug)]
pub struct HttpSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    /// Fixed number of extra attempts after a transport failure or 5xx.
    pub retries: u32,
    pub timeout: Duration,
}

impl HttpSettings {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self { base_url: base_url.into(), api_key, retries: 2, timeout: Duration::from_secs(300) }
    }

    /// Reads the base URL and key from the environment, reading the key from
    /// `key_env` instead of the default variable when given.
    pub fn from_env(key_env: Option<&str>) -> Self {
        let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let api_key = std::env::var(key_env.unwrap_or(API_KEY_ENV)).ok().filter(|k| !k.is_empty());
        Self::new(base_url, api_key)
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    fn client(&self) -> Result<Client, GatewayError> {
        Client::builder().timeout(self.timeout).build().map_err(|e| GatewayError::Transport(e.to_string()))
    }

    fn post(&self, client: &Client, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.endpoint(path);
        let mut last_error = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                log::warn!("retrying {url} (attempt {})", attempt + 1);
            }
            let mut req = client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Err(e) => last_error = Some(GatewayError::Transport(e.to_string())),
                Ok(resp) => {
                    let status = resp.status();
                    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                        return Err(GatewayError::Authentication(format!("{url} returned {status}")));
                    }
                    let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
                    if status.is_server_error() {
                        last_error = Some(GatewayError::Transport(format!("{url} returned {status}: {text}")));
                        continue;
                    }
                    if !status.is_success() {
                        return Err(GatewayError::Transport(format!("{url} returned {status}: {text}")));
                    }
                    return serde_json::from_str(&text)
                        .map_err(|e| GatewayError::Transport(format!("invalid JSON from {url}: {e}")));
                }
            }
        }
        Err(last_error.unwrap_or_else(|| GatewayError::Transport("no attempts made".into())))
    }
}

fn image_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        "image/jpeg"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() > 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "image/png"
    }
}

fn wire_message(message: &ChatMessage) -> Value {
    // Tool results travel as user turns: the wire protocol's tool role
    // requires native tool-call ids, which this loop does not use.
    let (role, text) = match message.role {
        Role::Tool => ("user", format!("Tool result:\n{}", message.content)),
        other => (other.as_str(), message.content.clone()),
    };
    if message.images.is_empty() {
        return json!({ "role": role, "content": text });
    }
    let mut parts = vec![json!({ "type": "text", "text": text })];
    for image in &message.images {
        let data = base64::engine::general_purpose::STANDARD.encode(image);
        parts.push(json!({
            "type": "image_url",
            "image_url": { "url": format!("data:{};base64,{data}", image_mime(image)) }
        }));
    }
    json!({ "role": role, "content": parts })
}

pub struct HttpChat {
    settings: HttpSettings,
    model: String,
    client: Client,
}

impl HttpChat {
    pub fn new(settings: HttpSettings, model: impl Into<String>) -> Result<Self, GatewayError> {
        let client = settings.client()?;
        Ok(Self { settings, model: model.into(), client })
    }
}

impl ChatModel for HttpChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": request.messages.iter().map(wire_message).collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.settings.post(&self.client, "chat/completions", &body)?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Transport(format!("response lacks choices[0].message.content: {value}")))?
            .to_string();
        let usage = |key: &str| value.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(ChatResponse {
            content,
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
        })
    }
}

pub struct HttpEmbedder {
    settings: HttpSettings,
    model: String,
    dimension: usize,
    client: Client,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, model: impl Into<String>, dimension: usize) -> Result<Self, GatewayError> {
        let client = settings.client()?;
        Ok(Self { settings, model: model.into(), dimension, client })
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> String {
        format!("http:{}", self.model)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let body = json!({ "model": self.model, "input": texts });
        let value = self.settings.post(&self.client, "embeddings", &body)?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Transport(format!("embedding response lacks data: {value}")))?;
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (position, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).unwrap_or(position as u64);
            let values: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| GatewayError::Transport("embedding entry lacks a vector".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| GatewayError::Transport("non-numeric embedding value".into())))
                .collect::<Result<_, _>>()?;
            if values.len() != self.dimension {
                return Err(GatewayError::DimensionMismatch { expected: self.dimension, got: values.len() });
            }
            rows.push((index, values));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, values)| EmbeddingVector { values }).collect())
    }
}

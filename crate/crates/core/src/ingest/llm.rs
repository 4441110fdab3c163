use serde_json::Value;

use super::prompts::repair_notice;
use super::{IngestError, IngestOptions};
use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::json::extract_json;

/// Sends a request whose reply must be JSON accepted by `interpret`. A
/// rejected reply gets one repair turn; a second rejection is a page-parse
/// error carrying the raw output.
pub(super) fn complete_json<T>(
    gateway: &Gateway,
    options: &IngestOptions,
    page: u32,
    stage: &'static str,
    messages: Vec<ChatMessage>,
    interpret: impl Fn(&Value) -> Result<T, String>,
) -> Result<T, IngestError> {
    let mut messages = messages;
    let mut last_raw = String::new();
    for attempt in 0..2 {
        let request = ChatRequest::new(messages.clone())
            .with_temperature(options.temperature)
            .with_max_tokens(options.max_tokens);
        let reply = gateway.complete(&request)?;
        let outcome = match extract_json(&reply.content) {
            Some(value) => interpret(&value),
            None => Err("no JSON value found".to_string()),
        };
        match outcome {
            Ok(value) => return Ok(value),
            Err(reason) => {
                log::warn!("page {page}: {stage} reply rejected (attempt {}): {reason}", attempt + 1);
                messages.push(ChatMessage::assistant(reply.content.clone()));
                messages.push(ChatMessage::user(repair_notice(&reason)));
                last_raw = reply.content;
            }
        }
    }
    Err(IngestError::PageParse { page, stage, raw: last_raw })
}

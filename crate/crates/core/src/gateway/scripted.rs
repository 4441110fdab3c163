use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatModel, ChatRequest, ChatResponse, GatewayError};
use crate::text::estimate_tokens;

/// Chat model that answers with a fixed sequence of replies, regardless of
/// the request. Token counts come from the chars/4 estimator.
///
/// Every request is kept so tests can inspect the prompts that were sent.
pub struct ScriptedChat {
    replies: Mutex<VecDeque<String>>,
    repeat_last: bool,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            repeat_last: false,
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Keeps answering with the final reply once the script runs out.
    pub fn repeating_last(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().expect("seen lock").clone()
    }
}

impl ChatModel for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.seen.lock().expect("seen lock").push(request.clone());
        let mut replies = self.replies.lock().expect("script lock");
        let content = if self.repeat_last && replies.len() == 1 {
            replies[0].clone()
        } else {
            replies.pop_front().ok_or_else(|| GatewayError::Transport("scripted chat has no replies left".into()))?
        };
        Ok(ChatResponse {
            completion_tokens: estimate_tokens(&content),
            prompt_tokens: request.estimated_prompt_tokens(),
            content,
        })
    }
}

/// Chat model backed by a closure.
pub struct FnChat<F> {
    respond: F,
}

impl<F> FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> ChatModel for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let content = (self.respond)(request)?;
        Ok(ChatResponse {
            completion_tokens: estimate_tokens(&content),
            prompt_tokens: request.estimated_prompt_tokens(),
            content,
        })
    }
}

//! The question-time retrieval loop.
//!
//! The model sees the tool list, graph statistics and the question, and
//! answers each round with one tool call. Calls are executed against the
//! graph and the dense index and their results appended to the
//! conversation, until the model calls `finish`, the round limit is hit, or
//! the conversation outgrows its share of the context window.

mod instrument;
mod prompt;
mod tools;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError, QA_MAX_TOKENS};
use crate::index::NeuralIndex;
use crate::json::{extract_json, to_canonical_compact};
use crate::model::{DocumentGraph, NodeId};
use crate::symbolic::{louvain_partition, ContextPolicy, DEFAULT_MAX_DEPTH};
use crate::text::estimate_tokens;

pub use instrument::{instrument, llm_call_bucket, CallStats, LLM_CALL_BUCKETS};
pub use prompt::system_prompt;
pub use tools::{dispatch, DispatchLimits, ToolCall, ToolName, ToolOutput};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("graph is for {graph} but the index is for {index}")]
    DocumentMismatch { graph: String, index: String },
    #[error("index does not cover every graph node")]
    IndexIncomplete,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_rounds: u32,
    pub context_window_tokens: u64,
    pub context_fill_ratio: f64,
    pub enable_contextualize: bool,
    pub enable_graph_query: bool,
    pub temperature: f64,
    pub max_tokens: u32,
    /// `k` for searches that do not give one.
    pub default_k: usize,
    pub max_query_depth: u32,
    /// Summary length in tool results.
    pub summary_chars: usize,
    /// Items shown per tool result.
    pub max_result_items: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_rounds: 20,
            context_window_tokens: 128_000,
            context_fill_ratio: 0.8,
            enable_contextualize: true,
            enable_graph_query: true,
            temperature: 0.0,
            max_tokens: QA_MAX_TOKENS,
            default_k: 5,
            max_query_depth: DEFAULT_MAX_DEPTH,
            summary_chars: 300,
            max_result_items: 50,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::InvalidConfig(m.into()));
        if self.max_rounds < 1 {
            return fail("max_rounds must be at least 1");
        }
        if !(self.context_fill_ratio > 0.0 && self.context_fill_ratio <= 1.0) {
            return fail("context_fill_ratio must be in (0, 1]");
        }
        if self.context_window_tokens == 0 {
            return fail("context_window_tokens must be positive");
        }
        if self.default_k == 0 || self.max_result_items == 0 {
            return fail("default_k and max_result_items must be positive");
        }
        Ok(())
    }

    pub fn token_budget(&self) -> f64 {
        self.context_fill_ratio * self.context_window_tokens as f64
    }

    fn is_enabled(&self, tool: ToolName) -> bool {
        match tool {
            ToolName::SymbolicGraphQuery => self.enable_graph_query,
            ToolName::Contextualize => self.enable_contextualize,
            ToolName::NeuroSemanticSearch | ToolName::Finish => true,
        }
    }

    fn limits(&self) -> DispatchLimits {
        DispatchLimits {
            summary_chars: self.summary_chars,
            max_items: self.max_result_items,
            max_query_depth: self.max_query_depth,
            context_policy: ContextPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AgentFinished,
    MaxRounds,
    ContextBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based.
    pub round: u32,
    /// `None` when the reply was not a valid tool call.
    pub call: Option<ToolCall>,
    /// The reply text, kept only when it could not be parsed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
    pub result_summary: String,
    /// Node ids exposed by the result.
    pub nodes: Vec<NodeId>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub question: String,
    pub doc_id: String,
    pub evidence_nodes: Vec<NodeId>,
    pub evidence_pages: Vec<u32>,
    pub trace: Vec<TraceEntry>,
    pub llm_calls: u64,
    pub tokens_generated: u64,
    pub prompt_tokens: u64,
    pub termination: Termination,
    pub max_rounds: u32,
    /// Tools actually executed, in order.
    pub dispatched: Vec<ToolName>,
    pub warnings: Vec<String>,
}

impl RetrievalResult {
    pub fn gathered(&self) -> BTreeSet<NodeId> {
        self.trace.iter().flat_map(|t| t.nodes.iter().copied()).collect()
    }
}

pub type TokenEstimator = fn(&str) -> u64;

fn estimate_prompt(messages: &[ChatMessage], estimator: TokenEstimator) -> u64 {
    messages.iter().map(|m| estimator(&m.content)).sum()
}

/// Runs the retrieval loop for one question with the default chars/4 token
/// estimate.
pub fn retrieve(
    question: &str,
    graph: &DocumentGraph,
    index: &NeuralIndex,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Result<RetrievalResult, AgentError> {
    retrieve_with_estimator(question, graph, index, gateway, config, estimate_tokens)
}

pub fn retrieve_with_estimator(
    question: &str,
    graph: &DocumentGraph,
    index: &NeuralIndex,
    gateway: &Gateway,
    config: &AgentConfig,
    estimator: TokenEstimator,
) -> Result<RetrievalResult, AgentError> {
    config.validate()?;
    if index.doc_id != graph.doc_id() {
        return Err(AgentError::DocumentMismatch { graph: graph.doc_id().into(), index: index.doc_id.clone() });
    }
    if !index.covers(graph) {
        return Err(AgentError::IndexIncomplete);
    }
    let with_communities;
    let graph = match graph.communities() {
        Some(_) => graph,
        None if config.enable_contextualize && !graph.is_empty() => {
            let partition = louvain_partition(graph, 1.0).expect("graph is not empty");
            with_communities = graph.clone().with_communities(partition);
            &with_communities
        }
        None => graph,
    };
    let limits = config.limits();
    let mut messages =
        vec![ChatMessage::system(system_prompt(graph, config)), ChatMessage::user(prompt::question_message(question))];
    let mut result = RetrievalResult {
        question: question.to_string(),
        doc_id: graph.doc_id().to_string(),
        evidence_nodes: Vec::new(),
        evidence_pages: Vec::new(),
        trace: Vec::new(),
        llm_calls: 0,
        tokens_generated: 0,
        prompt_tokens: 0,
        termination: Termination::MaxRounds,
        max_rounds: config.max_rounds,
        dispatched: Vec::new(),
        warnings: Vec::new(),
    };
    let mut gathered: BTreeSet<NodeId> = BTreeSet::new();
    let mut kept: Option<BTreeSet<NodeId>> = None;

    for round in 1..=config.max_rounds {
        if estimate_prompt(&messages, estimator) as f64 > config.token_budget() {
            result.termination = Termination::ContextBudget;
            break;
        }
        let request =
            ChatRequest::new(messages.clone()).with_temperature(config.temperature).with_max_tokens(config.max_tokens);
        let reply = gateway.complete(&request)?;
        result.llm_calls += 1;
        result.tokens_generated += reply.completion_tokens;
        result.prompt_tokens += reply.prompt_tokens;
        messages.push(ChatMessage::assistant(reply.content.clone()));

        let parsed = extract_json(&reply.content)
            .ok_or_else(|| "no JSON object found".to_string())
            .and_then(|v| ToolCall::from_value(&v, config.default_k, config.max_query_depth));
        let mut entry = TraceEntry {
            round,
            call: None,
            raw_reply: None,
            result_summary: String::new(),
            nodes: Vec::new(),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
        };
        let call = match parsed {
            Ok(call) => call,
            Err(reason) => {
                log::warn!("round {round}: malformed tool call: {reason}");
                entry.raw_reply = Some(reply.content);
                entry.result_summary = format!("malformed: {reason}");
                result.trace.push(entry);
                messages.push(ChatMessage::tool(prompt::malformed_notice(&reason)));
                continue;
            }
        };
        entry.call = Some(call.clone());

        if let ToolCall::Finish { evidence, .. } = &call {
            let mut keep = BTreeSet::new();
            for id in evidence {
                if gathered.contains(id) {
                    keep.insert(*id);
                } else {
                    result.warnings.push(format!("finish named {id}, which no tool returned; dropped"));
                }
            }
            entry.result_summary = format!("finished with {} nodes", keep.len());
            result.trace.push(entry);
            kept = Some(keep);
            result.termination = Termination::AgentFinished;
            break;
        }

        let output = if config.is_enabled(call.name()) {
            result.dispatched.push(call.name());
            dispatch(&call, graph, index, gateway, &limits)?
        } else {
            ToolOutput::error("tool-disabled", prompt::disabled_notice(call.name().as_str()))
        };
        gathered.extend(output.nodes.iter().copied());
        entry.result_summary = output.summary();
        entry.nodes = output.nodes.clone();
        result.trace.push(entry);
        let body = serde_json::json!({"round": round, "tool": call.name(), "result": output.result});
        messages.push(ChatMessage::tool(to_canonical_compact(&body).expect("tool result serializes")));
    }

    let evidence = kept.unwrap_or(gathered);
    result.evidence_pages = evidence.iter().map(NodeId::page).collect::<BTreeSet<_>>().into_iter().collect();
    result.evidence_nodes = evidence.into_iter().collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::gateway::{HashingEmbedder, ScriptedChat};
    use crate::model::{BoundingBox, ElementType, GraphNode};

    fn graph() -> DocumentGraph {
        let nodes = (1..=3).flat_map(|p| {
            (0..2).map(move |i| GraphNode {
                id: NodeId::new(p, i),
                page: p,
                element_type: if i == 0 { ElementType::Figure } else { ElementType::Paragraph },
                bbox: BoundingBox::FULL_PAGE,
                content: format!("page {p} element {i}"),
                summary: format!("summary {p} {i} topic{p}"),
                visual_attributes: Default::default(),
            })
        });
        let g = DocumentGraph::from_parts("doc", 3, nodes, vec![]);
        let partition = louvain_partition(&g, 1.0).unwrap();
        g.with_communities(partition)
    }

    fn setup(replies: Vec<String>) -> (DocumentGraph, NeuralIndex, Gateway, Arc<ScriptedChat>) {
        let g = graph();
        let embedder = Arc::new(HashingEmbedder::new(64));
        let chat = Arc::new(ScriptedChat::new(replies));
        let gw = Gateway::new(chat.clone(), embedder);
        let index = NeuralIndex::build(&g, &gw).unwrap();
        (g, index, gw, chat)
    }

    fn call(v: serde_json::Value) -> String {
        v.to_string()
    }

    #[test]
    fn search_then_finish() {
        let replies = vec![
            call(json!({"tool": "neuro_semantic_search", "args": {"query": "topic2", "k": 2}})),
            call(json!({"tool": "finish", "args": {"evidence": ["p2_e0", "p9_e9"], "rationale": "r"}})),
        ];
        let (g, index, gw, _) = setup(replies);
        let r = retrieve("q", &g, &index, &gw, &AgentConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::AgentFinished);
        assert_eq!(r.llm_calls, 2);
        assert_eq!(r.trace.len(), 2);
        assert_eq!(r.trace[0].nodes.len(), 2);
        assert_eq!(r.evidence_nodes, [NodeId::new(2, 0)]);
        assert_eq!(r.evidence_pages, [2]);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn never_finishing_stops_at_max_rounds_with_everything_gathered() {
        let replies = vec![call(json!({"tool": "neuro_semantic_search", "args": {"query": "topic1", "k": 1}}))];
        let g = graph();
        let chat = Arc::new(ScriptedChat::new(replies).repeating_last());
        let gw = Gateway::new(chat, Arc::new(HashingEmbedder::new(64)));
        let index = NeuralIndex::build(&g, &gw).unwrap();
        let config = AgentConfig { max_rounds: 4, ..Default::default() };
        let r = retrieve("q", &g, &index, &gw, &config).unwrap();
        assert_eq!(r.termination, Termination::MaxRounds);
        assert_eq!(r.llm_calls, 4);
        assert_eq!(r.evidence_nodes.len(), 1);
    }

    #[test]
    fn malformed_turn_counts_as_a_round() {
        let replies = vec!["let me think".to_string(), call(json!({"tool": "finish", "args": {"evidence": []}}))];
        let (g, index, gw, chat) = setup(replies);
        let r = retrieve("q", &g, &index, &gw, &AgentConfig::default()).unwrap();
        assert_eq!(r.llm_calls, 2);
        assert!(r.trace[0].call.is_none());
        let second = &chat.requests()[1];
        assert!(second.messages.last().unwrap().content.contains("not a valid tool call"));
    }

    #[test]
    fn disabled_tool_is_rejected_and_not_dispatched() {
        let replies = vec![
            call(json!({"tool": "symbolic_graph_query", "args": {"filters": [{"element_type": ["figure"]}]}})),
            call(json!({"tool": "neuro_semantic_search", "args": {"query": "topic3", "k": 1}})),
            call(json!({"tool": "finish", "args": {"evidence": ["p3_e0"]}})),
        ];
        let (g, index, gw, chat) = setup(replies);
        let config = AgentConfig { enable_graph_query: false, ..Default::default() };
        let r = retrieve("q", &g, &index, &gw, &config).unwrap();
        assert_eq!(r.dispatched, [ToolName::NeuroSemanticSearch]);
        assert_eq!(r.trace[0].result_summary, "error: tool-disabled");
        assert!(!chat.requests()[0].messages[0].content.contains("symbolic_graph_query"));
    }

    #[test]
    fn budget_stops_before_calling() {
        let (g, index, gw, _) = setup(vec![]);
        let config = AgentConfig { context_window_tokens: 10, ..Default::default() };
        let r = retrieve("q", &g, &index, &gw, &config).unwrap();
        assert_eq!(r.termination, Termination::ContextBudget);
        assert_eq!(r.llm_calls, 0);
        assert!(r.evidence_nodes.is_empty());
    }

    #[test]
    fn config_is_checked() {
        let (g, index, gw, _) = setup(vec![]);
        for bad in [
            AgentConfig { max_rounds: 0, ..Default::default() },
            AgentConfig { context_fill_ratio: 0.0, ..Default::default() },
            AgentConfig { context_fill_ratio: 1.5, ..Default::default() },
        ] {
            assert!(matches!(retrieve("q", &g, &index, &gw, &bad), Err(AgentError::InvalidConfig(_))));
        }
    }
}

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::gateway::{Gateway, GatewayError};
use crate::index::{semantic_search, IndexError, NeuralIndex};
use crate::json::truncate_chars;
use crate::model::{DocumentGraph, NodeId};
use crate::symbolic::{contextualize, execute_query_with_limit, ContextPolicy, GraphQuery, SymbolicError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    NeuroSemanticSearch,
    SymbolicGraphQuery,
    Contextualize,
    Finish,
}

impl ToolName {
    pub const ALL: [ToolName; 4] =
        [ToolName::NeuroSemanticSearch, ToolName::SymbolicGraphQuery, ToolName::Contextualize, ToolName::Finish];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToolName::NeuroSemanticSearch => "neuro_semantic_search",
            ToolName::SymbolicGraphQuery => "symbolic_graph_query",
            ToolName::Contextualize => "contextualize",
            ToolName::Finish => "finish",
        }
    }

    fn parse(name: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == name.trim())
    }
}

impl std::fmt::Display for ToolName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One agent action, wire form `{"tool": name, "args": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", content = "args", rename_all = "snake_case")]
pub enum ToolCall {
    NeuroSemanticSearch { query: String, k: usize },
    SymbolicGraphQuery(GraphQuery),
    Contextualize { node: NodeId },
    Finish { evidence: Vec<NodeId>, rationale: String },
}

impl ToolCall {
    pub fn name(&self) -> ToolName {
        match self {
            ToolCall::NeuroSemanticSearch { .. } => ToolName::NeuroSemanticSearch,
            ToolCall::SymbolicGraphQuery(_) => ToolName::SymbolicGraphQuery,
            ToolCall::Contextualize { .. } => ToolName::Contextualize,
            ToolCall::Finish { .. } => ToolName::Finish,
        }
    }

    /// Parses and validates a model turn. `args` may also be spelled
    /// `arguments`; a missing `k` takes `default_k`.
    pub fn from_value(value: &Value, default_k: usize, max_depth: u32) -> Result<ToolCall, String> {
        let obj = value.as_object().ok_or("a tool call must be a JSON object")?;
        let name = obj.get("tool").or_else(|| obj.get("name")).and_then(Value::as_str).ok_or("missing \"tool\"")?;
        let tool = ToolName::parse(name).ok_or_else(|| format!("unknown tool {name:?}"))?;
        let empty = json!({});
        let args = obj.get("args").or_else(|| obj.get("arguments")).unwrap_or(&empty);
        let args = match args {
            // some models send the arguments as an encoded string
            Value::String(s) => serde_json::from_str(s).map_err(|e| format!("args: {e}"))?,
            other => other.clone(),
        };
        let field = |k: &str| args.get(k);
        match tool {
            ToolName::NeuroSemanticSearch => {
                let query = field("query").and_then(Value::as_str).filter(|q| !q.trim().is_empty());
                let query = query.ok_or("neuro_semantic_search needs a non-empty \"query\"")?;
                let k = match field("k") {
                    None | Some(Value::Null) => default_k,
                    Some(v) => v.as_u64().filter(|k| *k >= 1).ok_or("\"k\" must be a positive integer")? as usize,
                };
                Ok(ToolCall::NeuroSemanticSearch { query: query.to_string(), k })
            }
            ToolName::SymbolicGraphQuery => {
                let query = GraphQuery::from_json(&args).map_err(|e| e.to_string())?;
                query.validate(max_depth).map_err(|e| e.to_string())?;
                Ok(ToolCall::SymbolicGraphQuery(query))
            }
            ToolName::Contextualize => {
                let raw = field("node").and_then(Value::as_str).ok_or("contextualize needs a \"node\" id")?;
                let node = raw.parse().map_err(|e| format!("{e}"))?;
                Ok(ToolCall::Contextualize { node })
            }
            ToolName::Finish => {
                let mut evidence = Vec::new();
                for item in field("evidence").and_then(Value::as_array).ok_or("finish needs an \"evidence\" list")? {
                    let raw = item.as_str().ok_or("evidence ids must be strings")?;
                    evidence.push(raw.parse().map_err(|e| format!("{e}"))?);
                }
                let rationale = field("rationale").and_then(Value::as_str).unwrap_or_default().to_string();
                Ok(ToolCall::Finish { evidence, rationale })
            }
        }
    }
}

/// What a tool call produced: the JSON shown to the agent and the node ids
/// it exposed.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolOutput {
    pub result: Value,
    pub nodes: Vec<NodeId>,
}

impl ToolOutput {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Self { result: json!({"error": code, "detail": detail.into()}), nodes: Vec::new() }
    }

    pub fn is_error(&self) -> bool {
        self.result.get("error").is_some()
    }

    /// One line for the trace.
    pub fn summary(&self) -> String {
        match self.result.get("error").and_then(Value::as_str) {
            Some(code) => format!("error: {code}"),
            None => format!("{} nodes", self.nodes.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispatchLimits {
    pub summary_chars: usize,
    pub max_items: usize,
    pub max_query_depth: u32,
    pub context_policy: ContextPolicy,
}

impl Default for DispatchLimits {
    fn default() -> Self {
        Self {
            summary_chars: 300,
            max_items: 50,
            max_query_depth: crate::symbolic::DEFAULT_MAX_DEPTH,
            context_policy: ContextPolicy::default(),
        }
    }
}

fn listing(
    graph: &DocumentGraph,
    ids: impl IntoIterator<Item = (NodeId, Option<f64>)>,
    with_type: bool,
    limits: &DispatchLimits,
) -> ToolOutput {
    let ids: Vec<(NodeId, Option<f64>)> = ids.into_iter().collect();
    let total = ids.len();
    let mut items = Vec::new();
    let mut nodes = Vec::new();
    for (id, score) in ids.into_iter().take(limits.max_items) {
        let Some(node) = graph.node(&id) else { continue };
        let mut item = json!({
            "node": id,
            "page": node.page,
            "summary": truncate_chars(&node.summary, limits.summary_chars),
        });
        if with_type {
            item["element_type"] = json!(node.element_type);
        }
        if let Some(s) = score {
            item["score"] = json!((s * 1e4).round() / 1e4);
        }
        items.push(item);
        nodes.push(id);
    }
    let mut result = json!({ "results": items });
    if total > nodes.len() {
        result["omitted"] = json!(total - nodes.len());
    }
    ToolOutput { result, nodes }
}

fn symbolic_error(e: SymbolicError) -> ToolOutput {
    match e {
        SymbolicError::UnknownNode(id) => ToolOutput::error("unknown-node", id),
        SymbolicError::MalformedQuery { .. } => ToolOutput::error("malformed-query", e.to_string()),
        SymbolicError::EmptyGraph => ToolOutput::error("empty-graph", e.to_string()),
        SymbolicError::NoCommunities => ToolOutput::error("no-communities", e.to_string()),
    }
}

/// Runs one tool against the indices. Tool failures come back as error
/// JSON; only gateway failures are returned as `Err`. `finish` has no
/// effect here.
pub fn dispatch(
    call: &ToolCall,
    graph: &DocumentGraph,
    index: &NeuralIndex,
    gateway: &Gateway,
    limits: &DispatchLimits,
) -> Result<ToolOutput, GatewayError> {
    Ok(match call {
        ToolCall::NeuroSemanticSearch { query, k } => match semantic_search(index, query, *k, gateway) {
            Ok(hits) => listing(graph, hits.into_iter().map(|h| (h.node, Some(h.score))), false, limits),
            Err(IndexError::Gateway(e)) => return Err(e),
            Err(IndexError::InvalidK) => ToolOutput::error("invalid-k", "k must be at least 1"),
            Err(e) => ToolOutput::error("search-failed", e.to_string()),
        },
        ToolCall::SymbolicGraphQuery(query) => match execute_query_with_limit(graph, query, limits.max_query_depth) {
            Ok(ids) => listing(graph, ids.into_iter().map(|id| (id, None)), true, limits),
            Err(e) => symbolic_error(e),
        },
        ToolCall::Contextualize { node } => match contextualize(graph, node, &limits.context_policy) {
            Ok(ids) => listing(graph, ids.into_iter().map(|id| (id, None)), false, limits),
            Err(e) => symbolic_error(e),
        },
        ToolCall::Finish { .. } => ToolOutput { result: json!({"finished": true}), nodes: Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form_round_trips() {
        let call = ToolCall::Contextualize { node: NodeId::new(3, 1) };
        let value = serde_json::to_value(&call).unwrap();
        assert_eq!(value, json!({"tool": "contextualize", "args": {"node": "p3_e1"}}));
        assert_eq!(ToolCall::from_value(&value, 5, 3).unwrap(), call);
    }

    #[test]
    fn lenient_spellings() {
        let v = json!({"name": "neuro_semantic_search", "arguments": "{\"query\": \"revenue\"}"});
        assert_eq!(
            ToolCall::from_value(&v, 7, 3).unwrap(),
            ToolCall::NeuroSemanticSearch { query: "revenue".into(), k: 7 }
        );
    }

    #[test]
    fn invalid_calls_are_rejected() {
        for bad in [
            json!({"tool": "browse", "args": {}}),
            json!({"tool": "neuro_semantic_search", "args": {"query": ""}}),
            json!({"tool": "neuro_semantic_search", "args": {"query": "x", "k": 0}}),
            json!({"tool": "contextualize", "args": {"node": "figure 3"}}),
            json!({"tool": "symbolic_graph_query", "args": {}}),
            json!({"tool": "symbolic_graph_query", "args": {"traverse": {"depth": 9}}}),
            json!({"tool": "finish", "args": {"evidence": ["p0_e1"]}}),
            json!([1, 2]),
        ] {
            assert!(ToolCall::from_value(&bad, 5, 3).is_err(), "{bad}");
        }
    }
}

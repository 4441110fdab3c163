use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::llm::complete_json;
use super::memory::{header_depth, memory_view, page_of};
use super::prompts::EDGE_EXTRACTION;
use super::{element_view, GraphBuilder, IngestError, IngestOptions};
use crate::gateway::{ChatMessage, Gateway};
use crate::json::to_canonical_compact;
use crate::model::{EdgeType, ElementType, GraphEdge, GraphNode, NodeId, RunningMemory, SectionEntry};

/// How far a figure's bottom edge may reach below the top of its caption
/// and still count as above it.
const ABOVE_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeExtraction {
    pub edges: Vec<GraphEdge>,
    pub warnings: Vec<String>,
}

fn nearest_captioned<'a>(caption: &GraphNode, nodes: &'a [GraphNode]) -> Option<&'a GraphNode> {
    let c = caption.bbox;
    nodes
        .iter()
        .filter(|n| n.element_type.is_captionable() && n.id != caption.id)
        .filter(|n| n.bbox.y1 <= c.y0 + ABOVE_TOLERANCE && n.bbox.y0 < c.y0)
        .min_by(|a, b| {
            let key = |n: &GraphNode| (n.bbox.horizontal_overlap(&c) <= 0.0, (c.y0 - n.bbox.y1).max(0.0));
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.id.cmp(&b.id))
        })
}

/// Layout edges of one page: the reading-order chain, captions to the
/// nearest figure, table or chart above them, and section membership
/// against the section stack as it evolves through the page.
pub fn rule_edges(memory: &RunningMemory, nodes: &[GraphNode]) -> Vec<GraphEdge> {
    let mut edges = Vec::new();
    for pair in nodes.windows(2) {
        edges.push(GraphEdge::new(pair[0].id, pair[1].id, EdgeType::ReadingOrderNext));
    }
    for caption in nodes.iter().filter(|n| n.element_type == ElementType::Caption) {
        if let Some(target) = nearest_captioned(caption, nodes) {
            edges.push(GraphEdge::new(caption.id, target.id, EdgeType::CaptionOf));
        }
    }
    let mut stack = memory.section_stack.clone();
    for node in nodes {
        if node.element_type == ElementType::SectionHeader {
            let depth = header_depth(node, &stack);
            while stack.last().is_some_and(|s| s.depth >= depth) {
                stack.pop();
            }
            stack.push(SectionEntry {
                title: String::new(),
                depth,
                start_node: node.id,
                font_size: super::memory::font_size(node),
            });
        } else if let Some(top) = stack.last() {
            edges.push(GraphEdge::new(node.id, top.start_node, EdgeType::SameSection));
        }
    }
    edges
}

/// Edges for a freshly parsed page. Layout edges come from [`rule_edges`];
/// with a chat model, cross-references and continuations are asked for and
/// kept only when both endpoints exist, one of them is on the new page, and
/// the label maps to `refers_to` or `continues_on`.
pub fn extract_edges(
    memory: &RunningMemory,
    new_nodes: &[GraphNode],
    graph: &GraphBuilder,
    gateway: &Gateway,
    options: &IngestOptions,
) -> Result<EdgeExtraction, IngestError> {
    if new_nodes.is_empty() {
        return Ok(EdgeExtraction::default());
    }
    let page = page_of(memory, new_nodes)?;
    if let Some(missing) = new_nodes.iter().find(|n| !graph.contains(&n.id)) {
        return Err(IngestError::Precondition(format!("{} is not in the graph yet", missing.id)));
    }
    let mut edges = rule_edges(memory, new_nodes);
    let mut warnings = Vec::new();
    if gateway.has_chat() {
        let proposed = complete_json(
            gateway,
            options,
            page,
            "edge extraction",
            edge_messages(memory, new_nodes, graph, page),
            proposals_from_value,
        )?;
        let mut seen: BTreeSet<(NodeId, NodeId, EdgeType)> =
            edges.iter().map(|e| (e.src, e.dst, e.edge_type)).collect();
        for p in proposed {
            match check_proposal(&p, graph, page) {
                Ok(edge) => {
                    if !graph.has_edge(&edge) && seen.insert((edge.src, edge.dst, edge.edge_type)) {
                        edges.push(edge);
                    }
                }
                Err(reason) => warnings.push(format!("page {page}: dropped edge {} -> {}: {reason}", p.src, p.dst)),
            }
        }
    }
    Ok(EdgeExtraction { edges, warnings })
}

fn edge_messages(memory: &RunningMemory, new_nodes: &[GraphNode], graph: &GraphBuilder, page: u32) -> Vec<ChatMessage> {
    let previous: Vec<&GraphNode> = graph.last_page_before(page).map(|p| graph.nodes_on_page(p)).unwrap_or_default();
    let listed: BTreeSet<NodeId> = previous.iter().map(|n| n.id).chain(new_nodes.iter().map(|n| n.id)).collect();
    let referenced: BTreeSet<NodeId> = memory.referenced_nodes().filter(|id| !listed.contains(id)).collect();
    let input = json!({
        "memory": memory_view(memory),
        "referenced_elements": referenced.iter().filter_map(|id| graph.node(id)).map(element_view).collect::<Vec<_>>(),
        "previous_page": previous.into_iter().map(element_view).collect::<Vec<_>>(),
        "new_page": new_nodes.iter().map(element_view).collect::<Vec<_>>(),
    });
    vec![
        ChatMessage::system(EDGE_EXTRACTION),
        ChatMessage::user(to_canonical_compact(&input).expect("edge input serializes")),
    ]
}

#[derive(Debug)]
struct Proposal {
    src: String,
    dst: String,
    relation: String,
    note: Option<String>,
}

fn proposals_from_value(value: &Value) -> Result<Vec<Proposal>, String> {
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => map.get("edges").and_then(Value::as_array).ok_or("expected an \"edges\" array")?,
        _ => return Err("expected an object".into()),
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let field = |k: &str| item.get(k).and_then(Value::as_str).map(str::to_string);
            Ok(Proposal {
                src: field("src").ok_or(format!("edge {i} has no src"))?,
                dst: field("dst").ok_or(format!("edge {i} has no dst"))?,
                relation: field("relation")
                    .or_else(|| field("edge_type"))
                    .or_else(|| field("type"))
                    .unwrap_or_default(),
                note: field("note").filter(|n| !n.trim().is_empty()),
            })
        })
        .collect()
}

fn check_proposal(p: &Proposal, graph: &GraphBuilder, page: u32) -> Result<GraphEdge, String> {
    let edge_type = match EdgeType::normalize(&p.relation) {
        None => return Err(format!("unmapped relation label {:?}", p.relation)),
        Some(t @ (EdgeType::RefersTo | EdgeType::ContinuesOn)) => t,
        Some(t) => return Err(format!("{t} edges are derived from layout")),
    };
    let src: NodeId = p.src.parse().map_err(|_| format!("bad id {:?}", p.src))?;
    let dst: NodeId = p.dst.parse().map_err(|_| format!("bad id {:?}", p.dst))?;
    if src == dst {
        return Err("self-loop".into());
    }
    for id in [src, dst] {
        if !graph.contains(&id) {
            return Err(format!("unknown node {id}"));
        }
    }
    if src.page() != page && dst.page() != page {
        return Err("neither endpoint is on the new page".into());
    }
    let edge = GraphEdge::new(src, dst, edge_type);
    Ok(match &p.note {
        Some(note) => edge.with_note(note.trim()),
        None => edge,
    })
}

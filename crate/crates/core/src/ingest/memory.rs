use serde_json::{json, Value};

use super::llm::complete_json;
use super::prompts::MEMORY_UPDATE;
use super::{element_view, GraphBuilder, IngestError, IngestOptions};
use crate::gateway::{ChatMessage, Gateway};
use crate::json::to_canonical_compact;
use crate::model::{ElementType, GraphNode, NodeId, RunningMemory, SectionEntry, UnresolvedRef};

const LEVEL_KEYS: [&str; 3] = ["level", "header_level", "depth"];
const FONT_SIZE_KEYS: [&str; 3] = ["font_size", "size", "font-size"];

fn leading_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let end = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    s[..end].parse().ok()
}

pub(super) fn font_size(node: &GraphNode) -> Option<f64> {
    FONT_SIZE_KEYS
        .iter()
        .find_map(|k| node.visual_attributes.get(*k))
        .and_then(|v| leading_number(v))
        .filter(|s| *s > 0.0)
}

/// Section depth of a header given the open sections: an explicit level
/// attribute wins; otherwise one more than the number of open sections set
/// in a strictly larger font. Without either signal the header is top level.
pub fn header_depth(node: &GraphNode, stack: &[SectionEntry]) -> u32 {
    let explicit = LEVEL_KEYS
        .iter()
        .find_map(|k| node.visual_attributes.get(*k))
        .and_then(|v| leading_number(v))
        .filter(|l| *l >= 1.0);
    if let Some(level) = explicit {
        return level as u32;
    }
    match font_size(node) {
        Some(size) => 1 + stack.iter().filter(|s| s.font_size.is_some_and(|f| f > size)).count() as u32,
        None => 1,
    }
}

pub(super) fn header_title(node: &GraphNode) -> String {
    let line = node.content.lines().map(str::trim).find(|l| !l.is_empty());
    line.unwrap_or(node.summary.trim()).to_string()
}

/// Pushes every section header of the page, in reading order.
pub(super) fn push_headers(memory: &mut RunningMemory, nodes: &[GraphNode]) {
    for node in nodes.iter().filter(|n| n.element_type == ElementType::SectionHeader) {
        let depth = header_depth(node, &memory.section_stack);
        memory.push_section(SectionEntry {
            title: header_title(node),
            depth,
            start_node: node.id,
            font_size: font_size(node),
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryUpdate {
    pub memory: RunningMemory,
    pub warnings: Vec<String>,
}

/// The page all `nodes` come from, checked to follow `memory`.
pub(super) fn page_of(memory: &RunningMemory, nodes: &[GraphNode]) -> Result<u32, IngestError> {
    let page = nodes[0].page;
    if nodes.iter().any(|n| n.page != page) {
        return Err(IngestError::Precondition("nodes span more than one page".into()));
    }
    if page <= memory.last_page {
        return Err(IngestError::Precondition(format!(
            "page {page} does not follow the last ingested page {}",
            memory.last_page
        )));
    }
    Ok(page)
}

pub(super) fn memory_view(memory: &RunningMemory) -> Value {
    json!({
        "sections": memory.section_stack.iter().map(|s| json!({
            "title": s.title, "depth": s.depth, "start_node": s.start_node,
        })).collect::<Vec<_>>(),
        "entities": memory.entities,
        "unresolved_refs": memory.unresolved_refs,
        "themes": memory.themes,
    })
}

/// Folds a new page into the running memory.
///
/// Section headers always update the section stack. When the gateway has a
/// chat model, it is asked for entity mentions, new and resolved dangling
/// references and theme notes; ids it returns that are not yet in `graph`
/// are dropped with a warning. An empty page leaves the memory unchanged.
pub fn update_memory(
    memory: &RunningMemory,
    new_nodes: &[GraphNode],
    graph: &GraphBuilder,
    gateway: &Gateway,
    options: &IngestOptions,
) -> Result<MemoryUpdate, IngestError> {
    if new_nodes.is_empty() {
        return Ok(MemoryUpdate { memory: memory.clone(), warnings: Vec::new() });
    }
    let page = page_of(memory, new_nodes)?;
    let mut next = memory.clone();
    push_headers(&mut next, new_nodes);
    let mut warnings = Vec::new();
    if gateway.has_chat() {
        let input = json!({
            "memory": memory_view(&next),
            "page": page,
            "elements": new_nodes.iter().map(element_view).collect::<Vec<_>>(),
        });
        let messages = vec![
            ChatMessage::system(MEMORY_UPDATE),
            ChatMessage::user(to_canonical_compact(&input).expect("memory view serializes")),
        ];
        let delta = complete_json(gateway, options, page, "memory update", messages, MemoryDelta::from_value)?;
        delta.apply(&mut next, graph, page, &mut warnings);
    }
    next.last_page = page;
    Ok(MemoryUpdate { memory: next, warnings })
}

#[derive(Debug, Default)]
struct MemoryDelta {
    entities: Vec<(String, Vec<String>)>,
    unresolved: Vec<(String, String)>,
    resolved: Vec<String>,
    themes: Vec<String>,
}

fn strings(v: Option<&Value>, what: &str) -> Result<Vec<String>, String> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| i.as_str().map(str::to_string).ok_or_else(|| format!("{what} must hold strings")))
            .collect(),
        Some(_) => Err(format!("{what} must be an array")),
    }
}

impl MemoryDelta {
    fn from_value(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("expected an object")?;
        let mut delta = MemoryDelta::default();
        for e in obj.get("entities").and_then(Value::as_array).into_iter().flatten() {
            let name = e.get("name").and_then(Value::as_str).ok_or("entity without a name")?;
            delta.entities.push((name.trim().to_string(), strings(e.get("mentions"), "mentions")?));
        }
        for r in obj.get("unresolved_refs").and_then(Value::as_array).into_iter().flatten() {
            let src = r.get("src").and_then(Value::as_str).ok_or("unresolved ref without src")?;
            let target = r.get("target_description").and_then(Value::as_str).unwrap_or_default();
            delta.unresolved.push((src.to_string(), target.trim().to_string()));
        }
        delta.resolved = strings(obj.get("resolved_refs"), "resolved_refs")?;
        delta.themes = strings(obj.get("themes"), "themes")?;
        Ok(delta)
    }

    fn apply(self, memory: &mut RunningMemory, graph: &GraphBuilder, page: u32, warnings: &mut Vec<String>) {
        let known = |raw: &str, warnings: &mut Vec<String>| -> Option<NodeId> {
            match raw.parse::<NodeId>() {
                Ok(id) if graph.contains(&id) && id.page() <= page => Some(id),
                _ => {
                    warnings.push(format!("page {page}: memory update named unknown node {raw:?}"));
                    None
                }
            }
        };
        for (name, mentions) in self.entities {
            if name.is_empty() {
                continue;
            }
            for raw in mentions {
                if let Some(id) = known(&raw, warnings) {
                    memory.add_mention(&name, id);
                }
            }
        }
        for raw in self.resolved {
            if let Ok(id) = raw.parse::<NodeId>() {
                memory.unresolved_refs.retain(|r| r.src != id);
            }
        }
        for (raw, target_description) in self.unresolved {
            if let Some(src) = known(&raw, warnings) {
                let entry = UnresolvedRef { src, target_description };
                if !memory.unresolved_refs.contains(&entry) {
                    memory.unresolved_refs.push(entry);
                }
            }
        }
        for theme in self.themes {
            let theme = theme.trim().to_string();
            if !theme.is_empty() && !memory.themes.contains(&theme) {
                memory.themes.push(theme);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{HashingEmbedder, ScriptedChat};
    use crate::model::BoundingBox;

    fn node(page: u32, index: u32, ty: ElementType, content: &str, attrs: &[(&str, &str)]) -> GraphNode {
        GraphNode {
            id: NodeId::new(page, index),
            page,
            element_type: ty,
            bbox: BoundingBox::FULL_PAGE,
            content: content.into(),
            summary: content.into(),
            visual_attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
        }
    }

    fn offline() -> Gateway {
        Gateway::offline(Arc::new(HashingEmbedder::new(8)))
    }

    fn builder(nodes: &[GraphNode]) -> GraphBuilder {
        let mut b = GraphBuilder::new("d");
        b.add_nodes(nodes.iter().cloned());
        b
    }

    #[test]
    fn header_sets_section_top() {
        let nodes = [node(1, 0, ElementType::SectionHeader, "Methods", &[])];
        let out = update_memory(&RunningMemory::new(), &nodes, &builder(&nodes), &offline(), &IngestOptions::default())
            .unwrap();
        let top = out.memory.current_section().unwrap();
        assert_eq!((top.title.as_str(), top.depth), ("Methods", 1));
        assert_eq!(out.memory.last_page, 1);
    }

    #[test]
    fn empty_page_leaves_memory_unchanged() {
        let mut m = RunningMemory::new();
        m.themes.push("x".into());
        m.last_page = 3;
        let out = update_memory(&m, &[], &GraphBuilder::new("d"), &offline(), &IngestOptions::default()).unwrap();
        assert_eq!(out.memory, m);
    }

    #[test]
    fn pages_must_advance() {
        let mut m = RunningMemory::new();
        m.last_page = 2;
        let nodes = [node(2, 0, ElementType::Paragraph, "x", &[])];
        assert!(matches!(
            update_memory(&m, &nodes, &builder(&nodes), &offline(), &IngestOptions::default()),
            Err(IngestError::Precondition(_))
        ));
    }

    #[test]
    fn depth_from_level_then_font_size() {
        let stack = vec![
            SectionEntry { title: "A".into(), depth: 1, start_node: NodeId::new(1, 0), font_size: Some(24.0) },
            SectionEntry { title: "B".into(), depth: 2, start_node: NodeId::new(1, 1), font_size: Some(18.0) },
        ];
        let h = |attrs: &[(&str, &str)]| node(2, 0, ElementType::SectionHeader, "H", attrs);
        assert_eq!(header_depth(&h(&[("level", "3")]), &stack), 3);
        assert_eq!(header_depth(&h(&[("font_size", "18pt")]), &stack), 2);
        assert_eq!(header_depth(&h(&[("size", "24")]), &stack), 1);
        assert_eq!(header_depth(&h(&[("font_size", "12")]), &stack), 3);
        assert_eq!(header_depth(&h(&[]), &stack), 1);
    }

    #[test]
    fn model_reports_dangling_reference() {
        let reply = r#"{"entities": [{"name": "Figure 3", "mentions": ["p1_e0", "p9_e9"]}],
            "unresolved_refs": [{"src": "p1_e0", "target_description": "Figure 3"}], "themes": ["results"]}"#;
        let gw = Gateway::new(Arc::new(ScriptedChat::new([reply])), Arc::new(HashingEmbedder::new(8)));
        let nodes = [node(1, 0, ElementType::Paragraph, "As we see in Figure 3, revenue rose.", &[])];
        let out =
            update_memory(&RunningMemory::new(), &nodes, &builder(&nodes), &gw, &IngestOptions::default()).unwrap();
        assert_eq!(out.memory.unresolved_refs.len(), 1);
        assert_eq!(out.memory.entities["Figure 3"], [NodeId::new(1, 0)]);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.memory.is_causal_up_to(1));
    }
}

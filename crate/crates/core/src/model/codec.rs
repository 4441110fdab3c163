//! Canonical graph file encoding.

use serde_json::Value;

use super::{validate_graph, DocumentGraph, GraphError};
use crate::json::to_canonical_pretty;

pub const SCHEMA_VERSION: u32 = 1;

/// Encodes a valid graph as canonical JSON: sorted keys, nodes sorted by id,
/// edges sorted by `(src, dst, edge_type)`, two-space indentation and a
/// trailing newline.
pub fn serialize_graph(graph: &DocumentGraph) -> Result<Vec<u8>, GraphError> {
    let violations = validate_graph(graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    let mut canonical = graph.clone();
    canonical.canonicalize();
    to_canonical_pretty(&canonical).map_err(|e| GraphError::Parse(e.to_string()))
}

/// Decodes and validates a graph file.
pub fn deserialize_graph(data: &[u8]) -> Result<DocumentGraph, GraphError> {
    let value: Value = serde_json::from_slice(data).map_err(|e| GraphError::Parse(e.to_string()))?;
    let version = value.get("schema_version").and_then(Value::as_u64);
    if version != Some(u64::from(SCHEMA_VERSION)) {
        return Err(GraphError::Schema { found: version, expected: SCHEMA_VERSION });
    }
    let mut graph: DocumentGraph = serde_json::from_value(value).map_err(|e| GraphError::Parse(e.to_string()))?;
    graph.canonicalize();
    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{BoundingBox, EdgeType, ElementType, GraphEdge, GraphNode, NodeId};

    fn node(page: u32, index: u32, ty: ElementType) -> GraphNode {
        let mut attrs = BTreeMap::new();
        attrs.insert("font".to_string(), "serif".to_string());
        GraphNode {
            id: NodeId::new(page, index),
            page,
            element_type: ty,
            bbox: BoundingBox::new(0.1, 0.1 * f64::from(index + 1), 0.9, 0.1 * f64::from(index + 2)),
            content: format!("content {page}/{index}"),
            summary: format!("summary {page}/{index}"),
            visual_attributes: attrs,
        }
    }

    #[test]
    fn insertion_order_does_not_change_bytes() {
        let nodes =
            vec![node(1, 0, ElementType::Figure), node(1, 1, ElementType::Caption), node(2, 0, ElementType::Paragraph)];
        let edges = vec![
            GraphEdge::new(NodeId::new(1, 1), NodeId::new(1, 0), EdgeType::CaptionOf),
            GraphEdge::new(NodeId::new(1, 0), NodeId::new(1, 1), EdgeType::ReadingOrderNext),
            GraphEdge::new(NodeId::new(2, 0), NodeId::new(1, 0), EdgeType::RefersTo),
        ];
        let a = DocumentGraph::from_parts("doc", 2, nodes.clone(), edges.clone());
        let b = DocumentGraph::from_parts("doc", 2, nodes.into_iter().rev(), edges.into_iter().rev());
        assert_eq!(serialize_graph(&a).unwrap(), serialize_graph(&b).unwrap());
    }

    #[test]
    fn unknown_schema_version_is_a_schema_error() {
        let g = DocumentGraph::from_parts("doc", 1, vec![node(1, 0, ElementType::Title)], vec![]);
        let text = String::from_utf8(serialize_graph(&g).unwrap()).unwrap();
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 999");
        assert!(matches!(deserialize_graph(bumped.as_bytes()), Err(GraphError::Schema { found: Some(999), .. })));
        let mut value: Value = serde_json::from_str(&text).unwrap();
        value.as_object_mut().unwrap().remove("schema_version");
        let missing = serde_json::to_vec(&value).unwrap();
        assert!(matches!(deserialize_graph(&missing), Err(GraphError::Schema { found: None, .. })));
    }

    #[test]
    fn truncated_json_is_a_parse_error() {
        let g = DocumentGraph::from_parts("doc", 1, vec![node(1, 0, ElementType::Title)], vec![]);
        let bytes = serialize_graph(&g).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(deserialize_graph(cut), Err(GraphError::Parse(_))));
    }

    #[test]
    fn invariant_breach_is_a_validation_error() {
        let g = DocumentGraph::from_parts("doc", 1, vec![node(1, 0, ElementType::Title)], vec![]);
        let text = String::from_utf8(serialize_graph(&g).unwrap()).unwrap();
        let broken = text.replace("\"page_count\": 1", "\"page_count\": 0");
        assert!(matches!(deserialize_graph(broken.as_bytes()), Err(GraphError::Invalid(_))));
    }

    #[test]
    fn serializing_an_invalid_graph_fails() {
        let g = DocumentGraph::from_parts(
            "doc",
            1,
            vec![node(1, 0, ElementType::Title)],
            vec![GraphEdge::new(NodeId::new(1, 0), NodeId::new(1, 5), EdgeType::RefersTo)],
        );
        assert!(matches!(serialize_graph(&g), Err(GraphError::Invalid(_))));
    }
}

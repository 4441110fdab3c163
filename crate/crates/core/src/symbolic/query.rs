//! Declarative graph query language.
//!
//! A query is a JSON object:
//!
//! ```json
//! {
//!   "filters": [
//!     {"element_type": ["figure", "chart"]},
//!     {"page": [2, 5]},
//!     {"content_contains": "revenue"},
//!     {"content_regex": "(?i)figure\\s+3"},
//!     {"visual_attribute": {"key": "font", "value": "bold"}},
//!     {"section": "Appendix A"}
//!   ],
//!   "traverse": {"edge_type": "refers_to", "direction": "in", "depth": 1},
//!   "limit": 20
//! }
//! ```
//!
//! Filters are conjunctive. Nodes passing every filter seed an optional
//! breadth-first expansion along `traverse`; the union is sorted by
//! `(page, id)` and cut to `limit`.

use std::collections::{BTreeSet, VecDeque};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{DocumentGraph, EdgeType, ElementType, GraphNode, NodeId};

use super::{Direction, SymbolicError};

pub const DEFAULT_MAX_DEPTH: u32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMatch {
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    ElementType(Vec<ElementType>),
    /// Inclusive page range.
    Page(u32, u32),
    /// Case-insensitive substring of the node content.
    ContentContains(String),
    ContentRegex(String),
    VisualAttribute(AttributeMatch),
    /// Section headers whose text contains the value, and every node linked
    /// to such a header by a `same_section` edge.
    Section(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traverse {
    #[serde(default)]
    pub edge_type: Option<EdgeType>,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_depth")]
    pub depth: u32,
}

fn default_depth() -> u32 {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphQuery {
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traverse: Option<Traverse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

fn malformed(predicate: impl Into<String>, reason: impl Into<String>) -> SymbolicError {
    SymbolicError::MalformedQuery { predicate: predicate.into(), reason: reason.into() }
}

impl GraphQuery {
    /// Parses the JSON wire form. Errors name the offending predicate.
    pub fn from_json(value: &Value) -> Result<Self, SymbolicError> {
        let object = value.as_object().ok_or_else(|| malformed("query", "expected a JSON object"))?;
        for key in object.keys() {
            if !matches!(key.as_str(), "filters" | "traverse" | "limit") {
                return Err(malformed(key.clone(), "unknown query field"));
            }
        }
        let mut filters = Vec::new();
        match object.get("filters") {
            None | Some(Value::Null) => {}
            Some(Value::Array(items)) => {
                for item in items {
                    filters.push(parse_filter(item)?);
                }
            }
            Some(other) => return Err(malformed(format!("filters: {other}"), "expected an array")),
        }
        let traverse = match object.get("traverse") {
            None | Some(Value::Null) => None,
            Some(raw) => Some(
                serde_json::from_value::<Traverse>(raw.clone())
                    .map_err(|e| malformed(format!("traverse: {raw}"), e.to_string()))?,
            ),
        };
        let limit = match object.get("limit") {
            None | Some(Value::Null) => None,
            Some(raw) => Some(
                raw.as_u64().ok_or_else(|| malformed(format!("limit: {raw}"), "expected a non-negative integer"))?
                    as usize,
            ),
        };
        Ok(Self { filters, traverse, limit })
    }

    pub fn parse(text: &str) -> Result<Self, SymbolicError> {
        let value: Value = serde_json::from_str(text).map_err(|e| malformed("query", e.to_string()))?;
        Self::from_json(&value)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("query serializes")
    }

    pub fn validate(&self, max_depth: u32) -> Result<(), SymbolicError> {
        if self.filters.is_empty() && self.traverse.is_none() {
            return Err(malformed("query", "at least one filter or a traverse clause is required"));
        }
        for filter in &self.filters {
            compile_filter(filter)?;
        }
        if let Some(t) = &self.traverse {
            if t.depth > max_depth {
                return Err(malformed(
                    format!("traverse.depth: {}", t.depth),
                    format!("depth exceeds the maximum of {max_depth}"),
                ));
            }
        }
        Ok(())
    }
}

fn parse_filter(item: &Value) -> Result<Filter, SymbolicError> {
    let describe = || item.to_string();
    let object = item
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| malformed(describe(), "each filter must be an object with exactly one predicate key"))?;
    let (key, arg) = object.iter().next().expect("one entry");
    let filter = match key.as_str() {
        "element_type" => {
            let labels: Vec<String> = match arg {
                Value::String(s) => vec![s.clone()],
                Value::Array(_) => serde_json::from_value(arg.clone())
                    .map_err(|_| malformed(describe(), "element_type expects a list of type names"))?,
                _ => return Err(malformed(describe(), "element_type expects a list of type names")),
            };
            let mut types = Vec::with_capacity(labels.len());
            for label in labels {
                let ty = ElementType::normalize(&label);
                if ty == ElementType::Other && label.trim().to_lowercase() != "other" {
                    return Err(malformed(describe(), format!("unknown element type {label:?}")));
                }
                types.push(ty);
            }
            Filter::ElementType(types)
        }
        "page" => {
            let (from, to) = match arg {
                Value::Number(n) => {
                    let p = n.as_u64().ok_or_else(|| malformed(describe(), "page must be a positive integer"))?;
                    (p, p)
                }
                Value::Array(bounds) if bounds.len() == 2 => {
                    let bound =
                        |v: &Value| v.as_u64().ok_or_else(|| malformed(describe(), "page bounds must be integers"));
                    (bound(&bounds[0])?, bound(&bounds[1])?)
                }
                _ => return Err(malformed(describe(), "page expects [from, to] or a single page")),
            };
            let to_u32 = |p: u64| u32::try_from(p).map_err(|_| malformed(describe(), "page out of range"));
            Filter::Page(to_u32(from)?, to_u32(to)?)
        }
        "content_contains" | "content_regex" | "section" => {
            let text = arg.as_str().ok_or_else(|| malformed(describe(), format!("{key} expects a string")))?;
            match key.as_str() {
                "content_contains" => Filter::ContentContains(text.to_string()),
                "content_regex" => Filter::ContentRegex(text.to_string()),
                _ => Filter::Section(text.to_string()),
            }
        }
        "visual_attribute" => Filter::VisualAttribute(
            serde_json::from_value(arg.clone())
                .map_err(|_| malformed(describe(), "visual_attribute expects {\"key\": ..., \"value\": ...}"))?,
        ),
        other => return Err(malformed(describe(), format!("unknown predicate {other:?}"))),
    };
    compile_filter(&filter)?;
    Ok(filter)
}

enum Compiled {
    Types(BTreeSet<ElementType>),
    Pages(u32, u32),
    Contains(String),
    Regex(Regex),
    Attribute(String, String),
    Section(String),
}

fn describe_filter(filter: &Filter) -> String {
    serde_json::to_string(filter).unwrap_or_else(|_| format!("{filter:?}"))
}

fn compile_filter(filter: &Filter) -> Result<Compiled, SymbolicError> {
    Ok(match filter {
        Filter::ElementType(types) => {
            if types.is_empty() {
                return Err(malformed(describe_filter(filter), "element_type set is empty"));
            }
            Compiled::Types(types.iter().copied().collect())
        }
        Filter::Page(from, to) => {
            if *from < 1 || from > to {
                return Err(malformed(describe_filter(filter), "page range must satisfy 1 <= from <= to"));
            }
            Compiled::Pages(*from, *to)
        }
        Filter::ContentContains(s) => Compiled::Contains(s.to_lowercase()),
        Filter::ContentRegex(pattern) => Compiled::Regex(
            Regex::new(pattern).map_err(|e| malformed(describe_filter(filter), format!("invalid regex: {e}")))?,
        ),
        Filter::VisualAttribute(m) => Compiled::Attribute(m.key.clone(), m.value.clone()),
        Filter::Section(s) => Compiled::Section(s.to_lowercase()),
    })
}

impl Compiled {
    fn matches(&self, node: &GraphNode, section_members: &BTreeSet<NodeId>) -> bool {
        match self {
            Compiled::Types(types) => types.contains(&node.element_type),
            Compiled::Pages(from, to) => (*from..=*to).contains(&node.page),
            Compiled::Contains(needle) => node.content.to_lowercase().contains(needle),
            Compiled::Regex(re) => re.is_match(&node.content),
            Compiled::Attribute(key, value) => node.visual_attributes.get(key) == Some(value),
            Compiled::Section(_) => section_members.contains(&node.id),
        }
    }
}

fn section_members(graph: &DocumentGraph, needle: &str) -> BTreeSet<NodeId> {
    let headers: BTreeSet<NodeId> = graph
        .nodes()
        .iter()
        .filter(|n| n.element_type == ElementType::SectionHeader && n.content.to_lowercase().contains(needle))
        .map(|n| n.id)
        .collect();
    let mut members = headers.clone();
    for edge in graph.edges() {
        if edge.edge_type == EdgeType::SameSection && headers.contains(&edge.dst) {
            members.insert(edge.src);
        }
    }
    members
}

/// Runs a query with the default traversal depth bound.
pub fn execute_query(graph: &DocumentGraph, query: &GraphQuery) -> Result<Vec<NodeId>, SymbolicError> {
    execute_query_with_limit(graph, query, DEFAULT_MAX_DEPTH)
}

pub fn execute_query_with_limit(
    graph: &DocumentGraph,
    query: &GraphQuery,
    max_depth: u32,
) -> Result<Vec<NodeId>, SymbolicError> {
    query.validate(max_depth)?;
    let compiled: Vec<Compiled> = query.filters.iter().map(compile_filter).collect::<Result<_, _>>()?;
    let mut section_sets = Vec::new();
    for c in &compiled {
        section_sets.push(match c {
            Compiled::Section(needle) => section_members(graph, needle),
            _ => BTreeSet::new(),
        });
    }

    let seeds: BTreeSet<NodeId> = graph
        .nodes()
        .iter()
        .filter(|node| compiled.iter().zip(&section_sets).all(|(c, members)| c.matches(node, members)))
        .map(|n| n.id)
        .collect();

    let mut result = seeds.clone();
    if let Some(traverse) = &query.traverse {
        let mut frontier: VecDeque<(NodeId, u32)> = seeds.iter().map(|id| (*id, 0)).collect();
        let mut visited = seeds;
        while let Some((node, depth)) = frontier.pop_front() {
            if depth >= traverse.depth {
                continue;
            }
            for next in super::adjacent(graph, node, traverse.edge_type, traverse.direction) {
                if visited.insert(next) {
                    result.insert(next);
                    frontier.push_back((next, depth + 1));
                }
            }
        }
    }

    // NodeId order is (page, index), so the set is already in output order.
    let mut ids: Vec<NodeId> = result.into_iter().collect();
    if let Some(limit) = query.limit {
        ids.truncate(limit);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_full_wire_form() {
        let q = GraphQuery::from_json(&json!({
            "filters": [
                {"element_type": ["figure", "Chart"]},
                {"page": [2, 5]},
                {"content_contains": "Revenue"},
                {"visual_attribute": {"key": "font", "value": "bold"}},
                {"section": "Appendix"}
            ],
            "traverse": {"edge_type": "refers_to", "direction": "in", "depth": 2},
            "limit": 4
        }))
        .unwrap();
        assert_eq!(q.filters[0], Filter::ElementType(vec![ElementType::Figure, ElementType::Chart]));
        assert_eq!(q.filters[1], Filter::Page(2, 5));
        assert_eq!(q.traverse.as_ref().unwrap().direction, Direction::In);
        assert_eq!(q.limit, Some(4));
        assert_eq!(GraphQuery::from_json(&q.to_json()).unwrap(), q);
    }

    #[test]
    fn errors_name_the_offending_predicate() {
        let cases = [
            json!({"filters": [{"element_type": ["hologram"]}]}),
            json!({"filters": [{"page": [5, 2]}]}),
            json!({"filters": [{"content_regex": "("}]}),
            json!({"filters": [{"colour": "red"}]}),
            json!({"filters": [{"page": 1, "limit": 2}]}),
        ];
        for case in cases {
            match GraphQuery::from_json(&case) {
                Err(SymbolicError::MalformedQuery { predicate, .. }) => {
                    let offending = case["filters"][0].to_string();
                    assert_eq!(predicate, offending);
                }
                other => panic!("expected malformed query for {case}, got {other:?}"),
            }
        }
    }

    #[test]
    fn empty_query_and_deep_traversal_are_rejected() {
        let empty = GraphQuery::default();
        assert!(matches!(empty.validate(3), Err(SymbolicError::MalformedQuery { .. })));
        let deep = GraphQuery::from_json(&json!({"traverse": {"depth": 4}})).unwrap();
        assert!(matches!(deep.validate(3), Err(SymbolicError::MalformedQuery { .. })));
    }
}

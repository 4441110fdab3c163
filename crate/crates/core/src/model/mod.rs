//! Document graph schema.
//!
//! A [`DocumentGraph`] is the symbolic index built for one document: one
//! [`GraphNode`] per localized page element and typed [`GraphEdge`]s between
//! them. Graphs are assembled once by ingestion and never mutated afterwards.

mod codec;
mod memory;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use codec::{deserialize_graph, serialize_graph, SCHEMA_VERSION};
pub use memory::{RunningMemory, SectionEntry, UnresolvedRef};
pub use validate::{validate_graph, Violation, ViolationKind};

/// Errors raised while decoding or encoding a graph file.
#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("malformed graph JSON: {0}")]
    Parse(String),
    #[error("unsupported schema_version {found:?} (expected {expected})")]
    Schema { found: Option<u64>, expected: u32 },
    #[error("graph violates {} invariant(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),
}

/// Identifier of a graph node, rendered as `p{page}_e{index}`.
///
/// Ordering is numeric on `(page, index)`, so sorting ids also sorts nodes
/// by page and then by reading order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    page: u32,
    index: u32,
}

impl NodeId {
    /// Pages are 1-based; `page` must be at least 1.
    pub fn new(page: u32, index: u32) -> Self {
        assert!(page >= 1, "node pages are 1-based");
        Self { page, index }
    }

    pub fn page(&self) -> u32 {
        self.page
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}_e{}", self.page, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid node id {0:?}: expected p<page>_e<index> with page >= 1")]
pub struct NodeIdParseError(pub String);

fn parse_canonical_u32(digits: &str) -> Option<u32> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Leading zeros would make two spellings of the same id.
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

impl FromStr for NodeId {
    type Err = NodeIdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || NodeIdParseError(s.to_string());
        let rest = s.strip_prefix('p').ok_or_else(err)?;
        let (page, index) = rest.split_once("_e").ok_or_else(err)?;
        let page = parse_canonical_u32(page).ok_or_else(err)?;
        let index = parse_canonical_u32(index).ok_or_else(err)?;
        if page == 0 {
            return Err(err());
        }
        Ok(Self { page, index })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Element extent in normalized page coordinates, origin at the top left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub const FULL_PAGE: BoundingBox = BoundingBox { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        coords.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)) && self.x0 <= self.x1 && self.y0 <= self.y1
    }

    pub fn center_x(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }

    /// Length of the overlap of the two boxes' horizontal extents.
    pub fn horizontal_overlap(&self, other: &BoundingBox) -> f64 {
        (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementType {
    Paragraph,
    Figure,
    Table,
    Chart,
    SectionHeader,
    Title,
    Footnote,
    Caption,
    List,
    Other,
}

impl ElementType {
    pub const ALL: [ElementType; 10] = [
        ElementType::Paragraph,
        ElementType::Figure,
        ElementType::Table,
        ElementType::Chart,
        ElementType::SectionHeader,
        ElementType::Title,
        ElementType::Footnote,
        ElementType::Caption,
        ElementType::List,
        ElementType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ElementType::Paragraph => "paragraph",
            ElementType::Figure => "figure",
            ElementType::Table => "table",
            ElementType::Chart => "chart",
            ElementType::SectionHeader => "section_header",
            ElementType::Title => "title",
            ElementType::Footnote => "footnote",
            ElementType::Caption => "caption",
            ElementType::List => "list",
            ElementType::Other => "other",
        }
    }

    /// Maps a free-form element label (as produced by a vision model) onto
    /// the closed set. Unrecognized labels become [`ElementType::Other`].
    pub fn normalize(label: &str) -> ElementType {
        let key = normalize_label(label);
        match key.as_str() {
            "paragraph" | "text" | "body" | "body_text" | "plain_text" | "text_block" | "abstract" => {
                ElementType::Paragraph
            }
            "figure" | "image" | "picture" | "photo" | "diagram" | "illustration" | "logo" | "icon" => {
                ElementType::Figure
            }
            "table" | "tabular" => ElementType::Table,
            "chart" | "graph" | "plot" | "bar_chart" | "line_chart" | "pie_chart" => ElementType::Chart,
            "section_header" | "section_heading" | "section_title" | "heading" | "header" | "subheading"
            | "subtitle" | "sub_heading" => ElementType::SectionHeader,
            "title" | "document_title" | "page_title" | "slide_title" => ElementType::Title,
            "footnote" | "foot_note" | "note" | "endnote" => ElementType::Footnote,
            "caption" | "figure_caption" | "table_caption" | "chart_caption" => ElementType::Caption,
            "list" | "list_item" | "bullet" | "bullets" | "bullet_list" | "enumeration" => ElementType::List,
            _ => ElementType::Other,
        }
    }

    /// Elements that a caption can be attached to.
    pub fn is_captionable(&self) -> bool {
        matches!(self, ElementType::Figure | ElementType::Table | ElementType::Chart)
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElementType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementType::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown element type {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    RefersTo,
    SameSection,
    ContinuesOn,
    CaptionOf,
    ReadingOrderNext,
}

impl EdgeType {
    pub const ALL: [EdgeType; 5] = [
        EdgeType::RefersTo,
        EdgeType::SameSection,
        EdgeType::ContinuesOn,
        EdgeType::CaptionOf,
        EdgeType::ReadingOrderNext,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeType::RefersTo => "refers_to",
            EdgeType::SameSection => "same_section",
            EdgeType::ContinuesOn => "continues_on",
            EdgeType::CaptionOf => "caption_of",
            EdgeType::ReadingOrderNext => "reading_order_next",
        }
    }

    /// Maps a free-form relation label onto the closed set, or `None` when
    /// the label has no counterpart.
    pub fn normalize(label: &str) -> Option<EdgeType> {
        let key = normalize_label(label);
        let edge = match key.as_str() {
            "refers_to" | "refers" | "references" | "reference" | "cites" | "mentions" | "points_to" | "explains"
            | "explained_by" | "describes" | "referenced_by" => EdgeType::RefersTo,
            "same_section" | "in_section" | "belongs_to_section" | "belongs_to" | "part_of_section"
            | "section_member" | "child_of" => EdgeType::SameSection,
            "continues_on"
            | "continues"
            | "continuation"
            | "continued_on"
            | "continued_by"
            | "continues_from"
            | "cross_page_continuation"
            | "continuation_of" => EdgeType::ContinuesOn,
            "caption_of" | "captions" | "caption" | "caption_for" | "has_caption" | "captioned_by" => {
                EdgeType::CaptionOf
            }
            "reading_order_next" | "reading_order" | "next" | "followed_by" | "precedes" => EdgeType::ReadingOrderNext,
            _ => return None,
        };
        Some(edge)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown edge type {s:?}"))
    }
}

fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    IntraPage,
    InterPage,
}

impl Provenance {
    pub fn between(src: NodeId, dst: NodeId) -> Provenance {
        if src.page() == dst.page() {
            Provenance::IntraPage
        } else {
            Provenance::InterPage
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub page: u32,
    pub element_type: ElementType,
    pub bbox: BoundingBox,
    pub content: String,
    pub summary: String,
    #[serde(default)]
    pub visual_attributes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub edge_type: EdgeType,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl GraphEdge {
    /// Builds an edge with provenance derived from the endpoint pages.
    pub fn new(src: NodeId, dst: NodeId, edge_type: EdgeType) -> Self {
        Self { src, dst, edge_type, provenance: Provenance::between(src, dst), note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn sort_key(&self) -> (NodeId, NodeId, EdgeType) {
        (self.src, self.dst, self.edge_type)
    }
}

/// Louvain partition of a graph's nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub assignment: BTreeMap<NodeId, usize>,
    pub modularity: f64,
}

impl CommunityPartition {
    pub fn community_of(&self, node: &NodeId) -> Option<usize> {
        self.assignment.get(node).copied()
    }

    pub fn community_count(&self) -> usize {
        self.assignment.values().max().map_or(0, |m| m + 1)
    }

    /// Members of `community` in ascending id order.
    pub fn members(&self, community: usize) -> Vec<NodeId> {
        self.assignment.iter().filter(|(_, c)| **c == community).map(|(id, _)| *id).collect()
    }
}

/// The symbolic index for one document.
///
/// Nodes are kept sorted by id and edges by `(src, dst, edge_type)`, so two
/// graphs built from the same parts in any order compare equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentGraph {
    schema_version: u32,
    doc_id: String,
    page_count: u32,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    communities: Option<CommunityPartition>,
}

impl DocumentGraph {
    /// Assembles a graph without validating it; see [`validate_graph`].
    pub fn from_parts(
        doc_id: impl Into<String>,
        page_count: u32,
        nodes: impl IntoIterator<Item = GraphNode>,
        edges: impl IntoIterator<Item = GraphEdge>,
    ) -> Self {
        let mut graph = Self {
            schema_version: SCHEMA_VERSION,
            doc_id: doc_id.into(),
            page_count,
            nodes: nodes.into_iter().collect(),
            edges: edges.into_iter().collect(),
            communities: None,
        };
        graph.canonicalize();
        graph
    }

    pub fn with_communities(mut self, partition: CommunityPartition) -> Self {
        self.communities = Some(partition);
        self
    }

    pub(crate) fn canonicalize(&mut self) {
        self.nodes.sort_by_key(|n| n.id);
        self.edges.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.note.cmp(&b.note)));
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn page_count(&self) -> u32 {
        self.page_count
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn communities(&self) -> Option<&CommunityPartition> {
        self.communities.as_ref()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &NodeId) -> Option<&GraphNode> {
        self.nodes.binary_search_by_key(id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.node(id).is_some()
    }

    pub fn nodes_on_page(&self, page: u32) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.page == page)
    }

    /// Number of nodes per element type, for prompt statistics.
    pub fn element_type_counts(&self) -> BTreeMap<ElementType, usize> {
        let mut counts = BTreeMap::new();
        for node in &self.nodes {
            *counts.entry(node.element_type).or_insert(0) += 1;
        }
        counts
    }

    pub fn edge_type_counts(&self) -> BTreeMap<EdgeType, usize> {
        let mut counts = BTreeMap::new();
        for edge in &self.edges {
            *counts.entry(edge.edge_type).or_insert(0) += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_id_round_trips_and_orders_numerically() {
        let id: NodeId = "p12_e3".parse().unwrap();
        assert_eq!(id.page(), 12);
        assert_eq!(id.index(), 3);
        assert_eq!(id.to_string(), "p12_e3");
        let a: NodeId = "p1_e2".parse().unwrap();
        let b: NodeId = "p1_e10".parse().unwrap();
        assert!(a < b);
    }

    #[test]
    fn node_id_rejects_non_canonical_spellings() {
        for bad in ["p0_e1", "p01_e1", "p1_e01", "p1e1", "q1_e1", "p1_e", "p_e1", "p1_e-1", ""] {
            assert!(bad.parse::<NodeId>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn element_labels_normalize_into_closed_set() {
        assert_eq!(ElementType::normalize("Section Header"), ElementType::SectionHeader);
        assert_eq!(ElementType::normalize("IMAGE"), ElementType::Figure);
        assert_eq!(ElementType::normalize("bar-chart"), ElementType::Chart);
        assert_eq!(ElementType::normalize("hologram"), ElementType::Other);
    }

    #[test]
    fn edge_labels_normalize_or_reject() {
        assert_eq!(EdgeType::normalize("Continuation"), Some(EdgeType::ContinuesOn));
        assert_eq!(EdgeType::normalize("refers to"), Some(EdgeType::RefersTo));
        assert_eq!(EdgeType::normalize("contradicts"), None);
    }

    #[test]
    fn bbox_validity() {
        assert!(BoundingBox::new(0.1, 0.2, 0.3, 0.4).is_valid());
        assert!(!BoundingBox::new(0.5, 0.2, 0.3, 0.4).is_valid());
        assert!(!BoundingBox::new(0.1, 0.2, 1.3, 0.4).is_valid());
        assert!(!BoundingBox::new(f64::NAN, 0.2, 0.3, 0.4).is_valid());
    }

    #[test]
    fn edge_provenance_follows_pages() {
        let e = GraphEdge::new(NodeId::new(1, 0), NodeId::new(2, 0), EdgeType::ContinuesOn);
        assert_eq!(e.provenance, Provenance::InterPage);
        let e = GraphEdge::new(NodeId::new(2, 0), NodeId::new(2, 1), EdgeType::ReadingOrderNext);
        assert_eq!(e.provenance, Provenance::IntraPage);
    }
}

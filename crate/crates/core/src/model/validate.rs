use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DocumentGraph, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateNode,
    NodePageMismatch,
    PageOutOfRange,
    InvalidBbox,
    EmptySummary,
    SelfLoop,
    DanglingEdge,
    ProvenanceMismatch,
    CommunityMissing,
    CommunityUnknownNode,
    CommunityNotContiguous,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::DuplicateNode => "duplicate_node",
            ViolationKind::NodePageMismatch => "node_page_mismatch",
            ViolationKind::PageOutOfRange => "page_out_of_range",
            ViolationKind::InvalidBbox => "invalid_bbox",
            ViolationKind::EmptySummary => "empty_summary",
            ViolationKind::SelfLoop => "self_loop",
            ViolationKind::DanglingEdge => "dangling_edge",
            ViolationKind::ProvenanceMismatch => "provenance_mismatch",
            ViolationKind::CommunityMissing => "community_missing",
            ViolationKind::CommunityUnknownNode => "community_unknown_node",
            ViolationKind::CommunityNotContiguous => "community_not_contiguous",
        }
    }
}

/// One broken invariant, naming the offending id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, subject: impl ToString, detail: impl Into<String>) -> Self {
        Self { kind, subject: subject.to_string(), detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}): {}", self.kind.as_str(), self.subject, self.detail)
    }
}

/// Checks every graph invariant and returns the violations found, in a
/// deterministic order. An empty result means the graph is well formed.
pub fn validate_graph(graph: &DocumentGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();

    for node in graph.nodes() {
        if !seen.insert(node.id) {
            out.push(Violation::new(ViolationKind::DuplicateNode, node.id, "node id appears more than once"));
        }
        if node.id.page() != node.page {
            out.push(Violation::new(
                ViolationKind::NodePageMismatch,
                node.id,
                format!("id encodes page {} but node.page is {}", node.id.page(), node.page),
            ));
        }
        if node.page < 1 || node.page > graph.page_count() {
            out.push(Violation::new(
                ViolationKind::PageOutOfRange,
                node.id,
                format!("page {} outside [1, {}]", node.page, graph.page_count()),
            ));
        }
        if !node.bbox.is_valid() {
            out.push(Violation::new(ViolationKind::InvalidBbox, node.id, format!("{:?}", node.bbox)));
        }
        if node.summary.trim().is_empty() {
            out.push(Violation::new(ViolationKind::EmptySummary, node.id, "summary is empty"));
        }
    }

    for edge in graph.edges() {
        let label = format!("{}->{} {}", edge.src, edge.dst, edge.edge_type);
        if edge.src == edge.dst {
            out.push(Violation::new(ViolationKind::SelfLoop, edge.src, label.clone()));
        }
        let mut dangling = false;
        for end in [edge.src, edge.dst] {
            if !seen.contains(&end) {
                dangling = true;
                out.push(Violation::new(ViolationKind::DanglingEdge, end, label.clone()));
            }
        }
        if !dangling && edge.provenance != Provenance::between(edge.src, edge.dst) {
            out.push(Violation::new(
                ViolationKind::ProvenanceMismatch,
                &label,
                format!("declared {:?} for pages {} and {}", edge.provenance, edge.src.page(), edge.dst.page()),
            ));
        }
    }

    if let Some(partition) = graph.communities() {
        for node in graph.nodes() {
            if !partition.assignment.contains_key(&node.id) {
                out.push(Violation::new(ViolationKind::CommunityMissing, node.id, "node has no community"));
            }
        }
        for id in partition.assignment.keys() {
            if !seen.contains(id) {
                out.push(Violation::new(ViolationKind::CommunityUnknownNode, id, "assignment for unknown node"));
            }
        }
        let used: BTreeSet<usize> = partition.assignment.values().copied().collect();
        if let Some(max) = used.iter().next_back() {
            if used.len() != max + 1 {
                out.push(Violation::new(
                    ViolationKind::CommunityNotContiguous,
                    graph.doc_id(),
                    format!("{} distinct indices but maximum index is {}", used.len(), max),
                ));
            }
        }
    }

    out
}

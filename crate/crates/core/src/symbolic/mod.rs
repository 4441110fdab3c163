//! Symbolic retrieval over a [`DocumentGraph`]: declarative queries,
//! neighborhood lookups, Louvain communities and contextual expansion.
//!
//! Everything here is a pure read of an immutable graph.

mod louvain;
mod query;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{DocumentGraph, EdgeType, NodeId};

pub use louvain::{
    louvain_communities, louvain_partition, modularity, modularity_with_resolution, simple_undirected, MIN_GAIN,
};
pub use query::{
    execute_query, execute_query_with_limit, AttributeMatch, Filter, GraphQuery, Traverse, DEFAULT_MAX_DEPTH,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymbolicError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("malformed query predicate {predicate}: {reason}")]
    MalformedQuery { predicate: String, reason: String },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph has no cached community partition")]
    NoCommunities,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Out,
    In,
    #[default]
    Both,
}

/// Adjacent ids in edge order, possibly with repeats.
fn adjacent(
    graph: &DocumentGraph,
    node: NodeId,
    edge_type: Option<EdgeType>,
    direction: Direction,
) -> impl Iterator<Item = NodeId> + '_ {
    graph.edges().iter().filter(move |e| edge_type.is_none_or(|t| e.edge_type == t)).filter_map(move |e| {
        let outgoing = matches!(direction, Direction::Out | Direction::Both) && e.src == node;
        let incoming = matches!(direction, Direction::In | Direction::Both) && e.dst == node;
        if outgoing {
            Some(e.dst)
        } else if incoming {
            Some(e.src)
        } else {
            None
        }
    })
}

/// Sorted, de-duplicated neighbors of `node` under an optional edge-type
/// filter.
pub fn neighbors(
    graph: &DocumentGraph,
    node: &NodeId,
    edge_type: Option<EdgeType>,
    direction: Direction,
) -> Result<Vec<NodeId>, SymbolicError> {
    if !graph.contains(node) {
        return Err(SymbolicError::UnknownNode(node.to_string()));
    }
    let set: BTreeSet<NodeId> = adjacent(graph, *node, edge_type, direction).collect();
    Ok(set.into_iter().collect())
}

/// What [`contextualize`] adds around a seed node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPolicy {
    pub include_community: bool,
    /// Edge types whose 1-hop neighbors (either direction) are added.
    pub neighbor_edges: Vec<EdgeType>,
}

impl Default for ContextPolicy {
    fn default() -> Self {
        Self { include_community: true, neighbor_edges: vec![EdgeType::SameSection, EdgeType::ContinuesOn] }
    }
}

/// Expands `node` into its Louvain community plus its structural 1-hop
/// neighbors. The result is sorted and always contains the seed.
pub fn contextualize(
    graph: &DocumentGraph,
    node: &NodeId,
    policy: &ContextPolicy,
) -> Result<Vec<NodeId>, SymbolicError> {
    if !graph.contains(node) {
        return Err(SymbolicError::UnknownNode(node.to_string()));
    }
    let mut set = BTreeSet::from([*node]);
    if policy.include_community {
        let partition = graph.communities().ok_or(SymbolicError::NoCommunities)?;
        let community = partition.community_of(node).ok_or(SymbolicError::NoCommunities)?;
        set.extend(partition.members(community));
    }
    for edge_type in &policy.neighbor_edges {
        set.extend(adjacent(graph, *node, Some(*edge_type), Direction::Both));
    }
    Ok(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{BoundingBox, CommunityPartition, ElementType, GraphEdge, GraphNode};

    fn node(id: &str, ty: ElementType) -> GraphNode {
        let id: NodeId = id.parse().unwrap();
        GraphNode {
            id,
            page: id.page(),
            element_type: ty,
            bbox: BoundingBox::new(0.1, 0.1, 0.9, 0.2),
            content: format!("content of {id}"),
            summary: format!("summary of {id}"),
            visual_attributes: BTreeMap::new(),
        }
    }

    fn id(s: &str) -> NodeId {
        s.parse().unwrap()
    }

    #[test]
    fn neighbors_filter_by_type_and_direction() {
        let graph = DocumentGraph::from_parts(
            "d",
            1,
            vec![
                node("p1_e0", ElementType::Figure),
                node("p1_e1", ElementType::Caption),
                node("p1_e2", ElementType::Paragraph),
            ],
            vec![
                GraphEdge::new(id("p1_e1"), id("p1_e0"), EdgeType::CaptionOf),
                GraphEdge::new(id("p1_e0"), id("p1_e1"), EdgeType::ReadingOrderNext),
                GraphEdge::new(id("p1_e1"), id("p1_e2"), EdgeType::ReadingOrderNext),
                GraphEdge::new(id("p1_e2"), id("p1_e0"), EdgeType::RefersTo),
            ],
        );
        assert_eq!(neighbors(&graph, &id("p1_e1"), Some(EdgeType::CaptionOf), Direction::Out).unwrap(), [id("p1_e0")]);
        assert_eq!(neighbors(&graph, &id("p1_e0"), None, Direction::Both).unwrap(), [id("p1_e1"), id("p1_e2")]);
        assert_eq!(neighbors(&graph, &id("p1_e1"), None, Direction::Both).unwrap().len(), 2);
        assert!(matches!(neighbors(&graph, &id("p4_e0"), None, Direction::Both), Err(SymbolicError::UnknownNode(_))));
    }

    #[test]
    fn contextualize_requires_communities_and_known_seed() {
        let graph = DocumentGraph::from_parts("d", 1, vec![node("p1_e0", ElementType::Paragraph)], vec![]);
        assert_eq!(contextualize(&graph, &id("p1_e0"), &ContextPolicy::default()), Err(SymbolicError::NoCommunities));
        let partition = louvain_partition(&graph, 1.0).unwrap();
        let graph = graph.with_communities(partition);
        assert_eq!(contextualize(&graph, &id("p1_e0"), &ContextPolicy::default()).unwrap(), [id("p1_e0")]);
        assert!(matches!(
            contextualize(&graph, &id("p1_e7"), &ContextPolicy::default()),
            Err(SymbolicError::UnknownNode(_))
        ));
    }

    #[test]
    fn contextualize_returns_whole_community() {
        let nodes = vec![
            node("p1_e0", ElementType::Paragraph),
            node("p1_e1", ElementType::Paragraph),
            node("p1_e2", ElementType::Paragraph),
            node("p2_e0", ElementType::Paragraph),
        ];
        let mut assignment = BTreeMap::new();
        for (n, c) in [("p1_e0", 0), ("p1_e1", 0), ("p1_e2", 0), ("p2_e0", 1)] {
            assignment.insert(id(n), c);
        }
        let graph = DocumentGraph::from_parts("d", 2, nodes, vec![])
            .with_communities(CommunityPartition { assignment, modularity: 0.0 });
        assert_eq!(
            contextualize(&graph, &id("p1_e1"), &ContextPolicy::default()).unwrap(),
            [id("p1_e0"), id("p1_e1"), id("p1_e2")]
        );
    }
}

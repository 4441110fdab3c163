//! Two-phase Louvain modularity maximization on the undirected, unweighted
//! view of a document graph.
//!
//! The run is fully deterministic: nodes are visited in ascending index
//! order, candidate communities are tried in ascending label order, and a
//! node only moves when the modularity gain beats staying put by more than
//! [`MIN_GAIN`].

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{CommunityPartition, DocumentGraph, NodeId};

use super::SymbolicError;

/// Smallest modularity improvement that counts as progress.
pub const MIN_GAIN: f64 = 1e-9;

/// Collapses `edges` into the simple undirected graph on `node_count`
/// vertices: self-loops are dropped and parallel or reversed edges merge
/// into one unit-weight edge.
pub fn simple_undirected(node_count: usize, edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = edges
        .iter()
        .filter(|(a, b)| a != b && *a < node_count && *b < node_count)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    set.into_iter().collect()
}

/// Newman–Girvan modularity (resolution 1) of `assignment` on the simple
/// undirected view of `edges`. Zero when the graph has no edges.
pub fn modularity(node_count: usize, edges: &[(usize, usize)], assignment: &[usize]) -> f64 {
    modularity_with_resolution(node_count, edges, assignment, 1.0)
}

pub fn modularity_with_resolution(
    node_count: usize,
    edges: &[(usize, usize)],
    assignment: &[usize],
    resolution: f64,
) -> f64 {
    let edges = simple_undirected(node_count, edges);
    let m = edges.len() as f64;
    if edges.is_empty() {
        return 0.0;
    }
    let mut degree = vec![0.0; node_count];
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    for &(a, b) in &edges {
        degree[a] += 1.0;
        degree[b] += 1.0;
        if assignment[a] == assignment[b] {
            *internal.entry(assignment[a]).or_insert(0.0) += 1.0;
        }
    }
    let mut total: BTreeMap<usize, f64> = BTreeMap::new();
    for (node, d) in degree.iter().enumerate() {
        *total.entry(assignment[node]).or_insert(0.0) += d;
    }
    total.iter().map(|(c, d)| internal.get(c).copied().unwrap_or(0.0) / m - resolution * (d / (2.0 * m)).powi(2)).sum()
}

/// Weighted symmetric graph for one Louvain level. `adj[i][i]` holds twice
/// the weight internal to the super-node `i`.
struct Level {
    adj: Vec<BTreeMap<usize, f64>>,
    degree: Vec<f64>,
    two_m: f64,
}

impl Level {
    fn from_simple(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![BTreeMap::new(); node_count];
        for &(a, b) in edges {
            *adj[a].entry(b).or_insert(0.0) += 1.0;
            *adj[b].entry(a).or_insert(0.0) += 1.0;
        }
        Self::from_adj(adj)
    }

    fn from_adj(adj: Vec<BTreeMap<usize, f64>>) -> Self {
        let degree: Vec<f64> = adj.iter().map(|row| row.values().sum()).collect();
        let two_m = degree.iter().sum();
        Self { adj, degree, two_m }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Repeated local-moving passes. Returns the community label of every
    /// node and whether anything moved.
    fn local_moving(&self, resolution: f64) -> (Vec<usize>, bool) {
        let n = self.len();
        let m = self.two_m / 2.0;
        let mut community: Vec<usize> = (0..n).collect();
        let mut totals: Vec<f64> = self.degree.clone();
        let mut moved_any = false;

        loop {
            let mut moved = false;
            for node in 0..n {
                let k_i = self.degree[node];
                let current = community[node];
                totals[current] -= k_i;

                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                links.insert(current, 0.0);
                for (&nbr, &w) in &self.adj[node] {
                    if nbr != node {
                        *links.entry(community[nbr]).or_insert(0.0) += w;
                    }
                }
                let gain = |c: usize, k_in: f64| (k_in - resolution * totals[c] * k_i / self.two_m) / m;

                let stay_gain = gain(current, links[&current]);
                let mut best = current;
                let mut best_gain = stay_gain;
                for (&c, &k_in) in &links {
                    let g = gain(c, k_in);
                    if g > best_gain {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != current && best_gain - stay_gain > MIN_GAIN {
                    community[node] = best;
                    moved = true;
                    moved_any = true;
                } else {
                    best = current;
                }
                totals[best] += k_i;
            }
            if !moved {
                break;
            }
        }
        (relabel_by_first_member(&community), moved_any)
    }

    fn aggregate(&self, community: &[usize]) -> Level {
        let count = community.iter().max().map_or(0, |m| m + 1);
        let mut adj = vec![BTreeMap::new(); count];
        for (node, row) in self.adj.iter().enumerate() {
            for (&nbr, &w) in row {
                *adj[community[node]].entry(community[nbr]).or_insert(0.0) += w;
            }
        }
        Level::from_adj(adj)
    }
}

/// Relabels communities 0.. in order of their smallest member.
fn relabel_by_first_member(community: &[usize]) -> Vec<usize> {
    let mut mapping: BTreeMap<usize, usize> = BTreeMap::new();
    community
        .iter()
        .map(|c| {
            let next = mapping.len();
            *mapping.entry(*c).or_insert(next)
        })
        .collect()
}

/// Louvain on an abstract graph with nodes `0..node_count`. Labels are
/// contiguous and ordered by each community's smallest node.
pub fn louvain_communities(node_count: usize, edges: &[(usize, usize)], resolution: f64) -> Vec<usize> {
    let simple = simple_undirected(node_count, edges);
    let mut assignment: Vec<usize> = (0..node_count).collect();
    if simple.is_empty() {
        return assignment;
    }
    let mut level = Level::from_simple(node_count, &simple);
    loop {
        let (community, moved) = level.local_moving(resolution);
        if !moved {
            break;
        }
        for c in assignment.iter_mut() {
            *c = community[*c];
        }
        level = level.aggregate(&community);
    }
    relabel_by_first_member(&assignment)
}

/// Partitions the graph's nodes. Nodes are indexed in ascending id order.
pub fn louvain_partition(graph: &DocumentGraph, resolution: f64) -> Result<CommunityPartition, SymbolicError> {
    if graph.is_empty() {
        return Err(SymbolicError::EmptyGraph);
    }
    let ids: Vec<NodeId> = graph.nodes().iter().map(|n| n.id).collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let edges: Vec<(usize, usize)> =
        graph.edges().iter().filter_map(|e| Some((*index.get(&e.src)?, *index.get(&e.dst)?))).collect();
    let labels = louvain_communities(ids.len(), &edges, resolution);
    let modularity = modularity(ids.len(), &edges, &labels);
    Ok(CommunityPartition { assignment: ids.into_iter().zip(labels).collect(), modularity })
}

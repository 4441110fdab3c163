//! Top-k retrieval over node summaries: an exact dense index and an Okapi
//! BM25 baseline sharing the [`ScoredHit`] ranking contract.

mod bm25;
mod pages;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{EmbeddingVector, Gateway, GatewayError};
use crate::json::to_canonical_pretty;
use crate::model::{DocumentGraph, NodeId};

pub use bm25::{Bm25Index, Bm25Params};
pub use pages::{page_ranking, page_scores, page_topk};

pub const INDEX_SCHEMA_VERSION: u32 = 1;
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("node {0} has an empty summary")]
    EmptySummary(NodeId),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("index was built with embedder {index}, but the gateway provides {gateway}")]
    EmbedderMismatch { index: String, gateway: String },
    #[error("index file: {0}")]
    Format(String),
}

/// One search result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub node: NodeId,
    pub score: f64,
}

/// Score descending, then id ascending.
pub fn rank_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.node.cmp(&b.node))
}

fn top_k(mut hits: Vec<ScoredHit>, k: usize) -> Vec<ScoredHit> {
    hits.sort_by(rank_order);
    hits.truncate(k);
    hits
}

/// Dense index of unit-normalized summary embeddings, one per graph node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralIndex {
    pub schema_version: u32,
    pub doc_id: String,
    pub embedder: String,
    pub dimension: usize,
    pub entries: BTreeMap<NodeId, EmbeddingVector>,
}

impl NeuralIndex {
    /// Embeds every node summary through the gateway.
    pub fn build(graph: &DocumentGraph, gateway: &Gateway) -> Result<Self, IndexError> {
        if let Some(node) = graph.nodes().iter().find(|n| n.summary.trim().is_empty()) {
            return Err(IndexError::EmptySummary(node.id));
        }
        let embedder = gateway.embedder();
        let mut entries = BTreeMap::new();
        if !graph.is_empty() {
            let texts: Vec<String> = graph.nodes().iter().map(|n| n.summary.clone()).collect();
            let vectors = gateway.embed(&texts)?;
            for (node, vector) in graph.nodes().iter().zip(vectors) {
                entries.insert(node.id, vector.normalized());
            }
        }
        Ok(Self {
            schema_version: INDEX_SCHEMA_VERSION,
            doc_id: graph.doc_id().to_string(),
            embedder: embedder.name(),
            dimension: embedder.dimension(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact top-k by cosine similarity against an already embedded query.
    pub fn search_vector(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dimension() != self.dimension {
            return Err(IndexError::Gateway(GatewayError::DimensionMismatch {
                expected: self.dimension,
                got: query.dimension(),
            }));
        }
        let hits = self.entries.iter().map(|(id, v)| ScoredHit { node: *id, score: v.dot(query) }).collect();
        Ok(top_k(hits, k))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        to_canonical_pretty(self).map_err(|e| IndexError::Format(e.to_string()))
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, IndexError> {
        let index: NeuralIndex = serde_json::from_slice(data).map_err(|e| IndexError::Format(e.to_string()))?;
        if index.schema_version != INDEX_SCHEMA_VERSION {
            return Err(IndexError::Format(format!("unsupported index schema_version {}", index.schema_version)));
        }
        for (id, v) in &index.entries {
            if v.dimension() != index.dimension {
                return Err(IndexError::Format(format!("{id}: vector has dimension {}", v.dimension())));
            }
            if (v.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(IndexError::Format(format!("{id}: vector is not unit length")));
            }
        }
        Ok(index)
    }

    /// True when the index holds exactly one entry per graph node.
    pub fn covers(&self, graph: &DocumentGraph) -> bool {
        self.doc_id == graph.doc_id()
            && self.entries.len() == graph.node_count()
            && graph.nodes().iter().all(|n| self.entries.contains_key(&n.id))
    }
}

/// Embeds `query` and returns the `k` most similar nodes. `k` larger than
/// the index returns every node.
pub fn semantic_search(
    index: &NeuralIndex,
    query: &str,
    k: usize,
    gateway: &Gateway,
) -> Result<Vec<ScoredHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    if index.is_empty() {
        return Err(IndexError::EmptyIndex);
    }
    let name = gateway.embedder().name();
    if name != index.embedder {
        return Err(IndexError::EmbedderMismatch { index: index.embedder.clone(), gateway: name });
    }
    let vector = gateway.embed(&[query.to_string()])?.remove(0).normalized();
    index.search_vector(&vector, k)
}

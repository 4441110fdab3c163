use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{top_k, IndexError, ScoredHit};
use crate::model::{DocumentGraph, NodeId};
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Okapi BM25 over node summaries.
///
/// `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`, and a document's score is
/// the sum over the distinct query terms it contains of
/// `idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub postings: BTreeMap<String, Vec<(NodeId, u32)>>,
    pub doc_lengths: BTreeMap<NodeId, u32>,
    pub avgdl: f64,
}

impl Bm25Index {
    pub fn build(graph: &DocumentGraph) -> Self {
        Self::build_with(graph, Bm25Params::default())
    }

    pub fn build_with(graph: &DocumentGraph, params: Bm25Params) -> Self {
        Self::from_documents(graph.nodes().iter().map(|n| (n.id, n.summary.as_str())), params)
    }

    pub fn from_documents<'a>(docs: impl IntoIterator<Item = (NodeId, &'a str)>, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<(NodeId, u32)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (id, text) in docs {
            let tokens = tokenize(text);
            doc_lengths.insert(id, tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push((id, tf));
            }
        }
        let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
        let avgdl = if doc_lengths.is_empty() { 0.0 } else { total as f64 / doc_lengths.len() as f64 };
        Self { params, postings, doc_lengths, avgdl }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let length_ratio = if self.avgdl > 0.0 { f64::from(doc_len) / self.avgdl } else { 1.0 };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * length_ratio))
    }

    /// Scores every document containing at least one query term and returns
    /// the top `k`.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.doc_lengths.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scores: BTreeMap<NodeId, f64> = BTreeMap::new();
        for term in &terms {
            let Some(postings) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(id, tf) in postings {
                *scores.entry(id).or_insert(0.0) += idf * self.term_weight(tf, self.doc_lengths[&id]);
            }
        }
        let hits = scores.into_iter().map(|(node, score)| ScoredHit { node, score }).collect();
        Ok(top_k(hits, k))
    }
}

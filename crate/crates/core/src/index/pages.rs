use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::ScoredHit;
use crate::model::DocumentGraph;

/// Pages ranked by their best element score; ties go to the lower page.
/// Pages without a hit are not included.
pub fn page_scores(hits: &[ScoredHit]) -> Vec<(u32, f64)> {
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    for hit in hits {
        let page = hit.node.page();
        best.entry(page).and_modify(|s| *s = s.max(hit.score)).or_insert(hit.score);
    }
    let mut ranked: Vec<(u32, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// The first `k_pages` pages under max-pooled element scores.
pub fn page_topk(hits: &[ScoredHit], _graph: &DocumentGraph, k_pages: usize) -> Vec<u32> {
    page_scores(hits).into_iter().take(k_pages).map(|(p, _)| p).collect()
}

/// Every page of the document: pages with hits in max-pooled order, then the
/// remaining pages in ascending order.
pub fn page_ranking(hits: &[ScoredHit], graph: &DocumentGraph) -> Vec<u32> {
    let mut ranked: Vec<u32> = page_scores(hits).into_iter().map(|(p, _)| p).collect();
    let seen: std::collections::BTreeSet<u32> = ranked.iter().copied().collect();
    ranked.extend((1..=graph.page_count()).filter(|p| !seen.contains(p)));
    ranked
}

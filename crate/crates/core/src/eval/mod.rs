//! Page-level retrieval evaluation: perfect recall, irrelevant-page ratio,
//! top-k sweeps and report files.
//!
//! Retrievers return pages. The agent's evidence nodes are projected onto
//! their pages; baselines rank pages by their best-scoring element.

mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{instrument, llm_call_bucket, retrieve, AgentConfig, AgentError, Termination, LLM_CALL_BUCKETS};
use crate::gateway::{Gateway, GatewayError};
use crate::index::{page_ranking, semantic_search, Bm25Index, IndexError, NeuralIndex};
use crate::json::{to_canonical_compact, to_canonical_pretty};
use crate::model::{deserialize_graph, DocumentGraph, GraphError};

pub use metrics::{irrelevant_pages_ratio, mean, perfect_recall, Ratio};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("unknown doc_id {0:?}")]
    UnknownDoc(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Graph { path: String, source: GraphError },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question_id: String,
    pub doc_id: String,
    pub question: String,
    pub evidence_pages: BTreeSet<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence_sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// Reads a JSONL dataset; blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<QaRecord>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QaRecord =
            serde_json::from_str(line).map_err(|e| EvalError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !ids.insert(record.question_id.clone()) {
            return Err(EvalError::Data(format!(
                "{}:{}: duplicate question_id {:?}",
                path.display(),
                i + 1,
                record.question_id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// A document ready for every retriever.
#[derive(Clone, Debug)]
pub struct EvalDocument {
    pub graph: DocumentGraph,
    pub index: NeuralIndex,
    pub bm25: Bm25Index,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    docs: BTreeMap<String, EvalDocument>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, graph: DocumentGraph, index: NeuralIndex) -> Result<(), EvalError> {
        if !index.covers(&graph) {
            return Err(EvalError::Data(format!("index for {:?} does not match its graph", graph.doc_id())));
        }
        let bm25 = Bm25Index::build(&graph);
        self.docs.insert(graph.doc_id().to_string(), EvalDocument { graph, index, bm25 });
        Ok(())
    }

    /// Loads `<doc_id>.json` and `<doc_id>.idx` from `dir` for every doc id.
    pub fn load_dir<'a>(dir: &Path, doc_ids: impl IntoIterator<Item = &'a str>) -> Result<Self, EvalError> {
        let mut corpus = Corpus::new();
        for doc_id in doc_ids {
            if corpus.docs.contains_key(doc_id) {
                continue;
            }
            let graph_path = dir.join(format!("{doc_id}.json"));
            let index_path = dir.join(format!("{doc_id}.idx"));
            if !graph_path.exists() {
                return Err(EvalError::UnknownDoc(doc_id.to_string()));
            }
            let bytes = fs::read(&graph_path).map_err(io_error(&graph_path))?;
            let graph = deserialize_graph(&bytes)
                .map_err(|source| EvalError::Graph { path: graph_path.display().to_string(), source })?;
            let bytes = fs::read(&index_path).map_err(io_error(&index_path))?;
            let index = NeuralIndex::from_bytes(&bytes)?;
            if graph.doc_id() != doc_id {
                return Err(EvalError::Data(format!("{} holds doc_id {:?}", graph_path.display(), graph.doc_id())));
            }
            corpus.insert(graph, index)?;
        }
        Ok(corpus)
    }

    pub fn get(&self, doc_id: &str) -> Result<&EvalDocument, EvalError> {
        self.docs.get(doc_id).ok_or_else(|| EvalError::UnknownDoc(doc_id.to_string()))
    }

    /// Every record must name a loaded document and gold pages inside it.
    pub fn check_dataset(&self, dataset: &[QaRecord]) -> Result<(), EvalError> {
        for r in dataset {
            let doc = self.get(&r.doc_id)?;
            let pages = doc.graph.page_count();
            if let Some(p) = r.evidence_pages.iter().find(|p| **p < 1 || **p > pages) {
                return Err(EvalError::Data(format!(
                    "{}: evidence page {p} outside 1..={pages} of {}",
                    r.question_id, r.doc_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Bm25,
    Dense,
}

impl Baseline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Baseline::Bm25 => "bm25",
            Baseline::Dense => "dense",
        }
    }
}

/// Every page of the document, best first, for a baseline.
pub fn ranked_pages(
    doc: &EvalDocument,
    question: &str,
    baseline: Baseline,
    gateway: &Gateway,
) -> Result<Vec<u32>, EvalError> {
    if doc.graph.is_empty() {
        return Ok((1..=doc.graph.page_count()).collect());
    }
    let hits = match baseline {
        Baseline::Dense => semantic_search(&doc.index, question, doc.index.len(), gateway)?,
        Baseline::Bm25 => doc.bm25.search(question, doc.bm25.doc_count())?,
    };
    Ok(page_ranking(&hits, &doc.graph))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RetrieverSpec {
    Ladrag(AgentConfig),
    TopK { baseline: Baseline, k: usize },
    Oracle,
}

impl RetrieverSpec {
    pub fn name(&self) -> String {
        match self {
            RetrieverSpec::Ladrag(c) => match (c.enable_graph_query, c.enable_contextualize) {
                (true, true) => "ladrag".into(),
                (false, true) => "ladrag-no-graph-query".into(),
                (true, false) => "ladrag-no-contextualize".into(),
                (false, false) => "ladrag-no-graph-query-no-contextualize".into(),
            },
            RetrieverSpec::TopK { baseline, k } => format!("{}@{k}", baseline.as_str()),
            RetrieverSpec::Oracle => "oracle".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub doc_id: String,
    pub retriever: String,
    pub retrieved_pages: Vec<u32>,
    pub pr: u8,
    pub ipr: f64,
    pub llm_calls: u64,
    pub tokens: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens_per_call: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
}

fn scored(record: &QaRecord, retriever: String, pages: BTreeSet<u32>) -> EvalRecord {
    EvalRecord {
        question_id: record.question_id.clone(),
        doc_id: record.doc_id.clone(),
        retriever,
        pr: perfect_recall(&record.evidence_pages, &pages),
        ipr: irrelevant_pages_ratio(&record.evidence_pages, &pages),
        retrieved_pages: pages.into_iter().collect(),
        llm_calls: 0,
        tokens: 0,
        tokens_per_call: Vec::new(),
        termination: None,
    }
}

pub fn evaluate_record(
    record: &QaRecord,
    corpus: &Corpus,
    spec: &RetrieverSpec,
    gateway: &Gateway,
) -> Result<EvalRecord, EvalError> {
    let doc = corpus.get(&record.doc_id)?;
    let name = spec.name();
    Ok(match spec {
        RetrieverSpec::Oracle => scored(record, name, record.evidence_pages.clone()),
        RetrieverSpec::TopK { baseline, k } => {
            if *k == 0 {
                return Err(EvalError::InvalidK);
            }
            let ranking = ranked_pages(doc, &record.question, *baseline, gateway)?;
            scored(record, name, ranking.into_iter().take(*k).collect())
        }
        RetrieverSpec::Ladrag(config) => {
            let result = retrieve(&record.question, &doc.graph, &doc.index, gateway, config)?;
            let stats = instrument(&result);
            for w in result.warnings.iter().chain(&stats.warnings) {
                log::warn!("{}: {w}", record.question_id);
            }
            let mut out = scored(record, name, result.evidence_pages.iter().copied().collect());
            out.llm_calls = result.llm_calls;
            out.tokens = result.tokens_generated;
            out.tokens_per_call = stats.tokens_per_call;
            out.termination = Some(result.termination);
            out
        }
    })
}

pub fn evaluate(
    dataset: &[QaRecord],
    corpus: &Corpus,
    spec: &RetrieverSpec,
    gateway: &Gateway,
) -> Result<Vec<EvalRecord>, EvalError> {
    corpus.check_dataset(dataset)?;
    dataset.iter().map(|r| evaluate_record(r, corpus, spec, gateway)).collect()
}

pub fn composite_ratio(records: &[EvalRecord]) -> Result<Ratio, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let pr = mean(records.iter().map(|r| f64::from(r.pr)));
    let ipr = mean(records.iter().map(|r| r.ipr));
    Ok(Ratio::from_means(pr, ipr))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub mean_pr: f64,
    pub mean_ipr: f64,
}

/// Mean PR and IPR of a baseline at every `k` in `1..=k_max`.
pub fn sweep_topk(
    dataset: &[QaRecord],
    corpus: &Corpus,
    baseline: Baseline,
    k_max: usize,
    gateway: &Gateway,
) -> Result<Vec<SweepPoint>, EvalError> {
    if k_max == 0 {
        return Err(EvalError::InvalidK);
    }
    if dataset.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    corpus.check_dataset(dataset)?;
    let rankings = dataset
        .iter()
        .map(|r| ranked_pages(corpus.get(&r.doc_id)?, &r.question, baseline, gateway))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sweep_rankings(dataset, &rankings, k_max))
}

/// The sweep for precomputed page rankings, one per record.
pub fn sweep_rankings(dataset: &[QaRecord], rankings: &[Vec<u32>], k_max: usize) -> Vec<SweepPoint> {
    (1..=k_max)
        .map(|k| {
            let (prs, iprs): (Vec<f64>, Vec<f64>) = dataset
                .iter()
                .zip(rankings)
                .map(|(r, ranking)| {
                    let pages: BTreeSet<u32> = ranking.iter().take(k).copied().collect();
                    (
                        f64::from(perfect_recall(&r.evidence_pages, &pages)),
                        irrelevant_pages_ratio(&r.evidence_pages, &pages),
                    )
                })
                .unzip();
            SweepPoint { k, mean_pr: mean(prs), mean_ipr: mean(iprs) }
        })
        .collect()
}

/// Smallest k reaching mean PR 1.
pub fn k_for_perfect_recall(curve: &[SweepPoint]) -> Option<usize> {
    curve.iter().find(|p| p.mean_pr >= 1.0).map(|p| p.k)
}

/// The sweep point with the highest recall among those no noisier than
/// `max_ipr`; the smallest k wins ties.
pub fn best_at_matched_noise(curve: &[SweepPoint], max_ipr: f64) -> Option<&SweepPoint> {
    curve.iter().filter(|p| p.mean_ipr <= max_ipr).fold(None, |best: Option<&SweepPoint>, p| match best {
        Some(b) if b.mean_pr >= p.mean_pr => Some(b),
        _ => Some(p),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallSummary {
    pub total_calls: u64,
    pub mean_calls: f64,
    /// Queries per call-count bucket.
    pub histogram: BTreeMap<String, u64>,
    pub total_tokens: u64,
    pub calls_under_100_tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub retriever: String,
    pub questions: usize,
    pub mean_pr: f64,
    pub mean_ipr: f64,
    pub composite: Ratio,
    pub mean_retrieved_pages: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls: Option<CallSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_for_perfect_recall: Option<usize>,
}

pub fn summarize(records: &[EvalRecord], retriever: &str) -> Result<EvalSummary, EvalError> {
    let composite = composite_ratio(records)?;
    let agentic = records.iter().any(|r| r.termination.is_some());
    let calls = agentic.then(|| {
        let mut histogram: BTreeMap<String, u64> = LLM_CALL_BUCKETS.iter().map(|b| (b.to_string(), 0)).collect();
        for r in records {
            *histogram.entry(llm_call_bucket(r.llm_calls).to_string()).or_default() += 1;
        }
        let total_calls = records.iter().map(|r| r.llm_calls).sum();
        CallSummary {
            total_calls,
            mean_calls: mean(records.iter().map(|r| r.llm_calls as f64)),
            histogram,
            total_tokens: records.iter().map(|r| r.tokens).sum(),
            calls_under_100_tokens: records.iter().flat_map(|r| &r.tokens_per_call).filter(|t| **t < 100).count()
                as u64,
        }
    });
    Ok(EvalSummary {
        retriever: retriever.to_string(),
        questions: records.len(),
        mean_pr: mean(records.iter().map(|r| f64::from(r.pr))),
        mean_ipr: mean(records.iter().map(|r| r.ipr)),
        composite,
        mean_retrieved_pages: mean(records.iter().map(|r| r.retrieved_pages.len() as f64)),
        calls,
        sweep: None,
        k_for_perfect_recall: None,
    })
}

/// Evaluates `spec` on the dataset and writes `records.jsonl` and
/// `summary.json` into `out_dir`. With `sweep_k_max` and a baseline spec the
/// summary also carries the top-k sweep.
pub fn run_eval(
    dataset: &[QaRecord],
    corpus: &Corpus,
    spec: &RetrieverSpec,
    gateway: &Gateway,
    out_dir: &Path,
    sweep_k_max: Option<usize>,
) -> Result<EvalSummary, EvalError> {
    let records = evaluate(dataset, corpus, spec, gateway)?;
    let mut summary = summarize(&records, &spec.name())?;
    if let (Some(k_max), RetrieverSpec::TopK { baseline, .. }) = (sweep_k_max, spec) {
        let curve = sweep_topk(dataset, corpus, *baseline, k_max, gateway)?;
        summary.k_for_perfect_recall = k_for_perfect_recall(&curve);
        summary.sweep = Some(curve);
    }
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let records_path = out_dir.join("records.jsonl");
    let mut file = fs::File::create(&records_path).map_err(io_error(&records_path))?;
    for r in &records {
        let line = to_canonical_compact(r).map_err(|e| EvalError::Data(e.to_string()))?;
        writeln!(file, "{line}").map_err(io_error(&records_path))?;
    }
    let summary_path = out_dir.join("summary.json");
    let bytes = to_canonical_pretty(&summary).map_err(|e| EvalError::Data(e.to_string()))?;
    fs::write(&summary_path, bytes).map_err(io_error(&summary_path))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::HashingEmbedder;
    use crate::model::{BoundingBox, ElementType, GraphNode, NodeId};

    fn doc(doc_id: &str, pages: u32) -> (DocumentGraph, NeuralIndex, Gateway) {
        let nodes = (1..=pages).map(|p| GraphNode {
            id: NodeId::new(p, 0),
            page: p,
            element_type: ElementType::Paragraph,
            bbox: BoundingBox::FULL_PAGE,
            content: format!("topic{p}"),
            summary: format!("topic{p} filler"),
            visual_attributes: Default::default(),
        });
        let graph = DocumentGraph::from_parts(doc_id, pages, nodes, vec![]);
        let gw = Gateway::offline(Arc::new(HashingEmbedder::new(64)));
        let index = NeuralIndex::build(&graph, &gw).unwrap();
        (graph, index, gw)
    }

    fn record(id: &str, doc_id: &str, question: &str, gold: &[u32]) -> QaRecord {
        QaRecord {
            question_id: id.into(),
            doc_id: doc_id.into(),
            question: question.into(),
            evidence_pages: gold.iter().copied().collect(),
            evidence_sources: vec![],
            answer: None,
        }
    }

    #[test]
    fn sweep_reaches_full_recall_at_page_count_and_is_monotone() {
        let (g, idx, gw) = doc("d", 6);
        let mut corpus = Corpus::new();
        corpus.insert(g, idx).unwrap();
        let data = vec![record("q1", "d", "topic2", &[2, 5]), record("q2", "d", "unrelated words", &[6])];
        for baseline in [Baseline::Bm25, Baseline::Dense] {
            let curve = sweep_topk(&data, &corpus, baseline, 6, &gw).unwrap();
            assert_eq!(curve.last().unwrap().mean_pr, 1.0);
            assert!(curve.windows(2).all(|w| w[0].mean_pr <= w[1].mean_pr));
        }
        assert!(matches!(sweep_topk(&data, &corpus, Baseline::Bm25, 0, &gw), Err(EvalError::InvalidK)));
    }

    #[test]
    fn oracle_is_perfect_and_unknown_docs_are_named() {
        let (g, idx, gw) = doc("d", 3);
        let mut corpus = Corpus::new();
        corpus.insert(g, idx).unwrap();
        let data = vec![record("q1", "d", "x", &[1, 3])];
        let recs = evaluate(&data, &corpus, &RetrieverSpec::Oracle, &gw).unwrap();
        assert_eq!((recs[0].pr, recs[0].ipr), (1, 0.0));
        assert!(composite_ratio(&recs).unwrap().is_infinite());
        let bad = vec![record("q2", "missing", "x", &[1])];
        match evaluate(&bad, &corpus, &RetrieverSpec::Oracle, &gw) {
            Err(EvalError::UnknownDoc(id)) => assert_eq!(id, "missing"),
            other => panic!("{other:?}"),
        }
        let out_of_range = vec![record("q3", "d", "x", &[4])];
        assert!(matches!(evaluate(&out_of_range, &corpus, &RetrieverSpec::Oracle, &gw), Err(EvalError::Data(_))));
    }

    #[test]
    fn composite_needs_records() {
        assert!(matches!(composite_ratio(&[]), Err(EvalError::EmptyRecords)));
    }

    #[test]
    fn matched_noise_picks_best_recall_under_cap() {
        let curve = vec![
            SweepPoint { k: 1, mean_pr: 0.2, mean_ipr: 0.1 },
            SweepPoint { k: 2, mean_pr: 0.5, mean_ipr: 0.3 },
            SweepPoint { k: 3, mean_pr: 1.0, mean_ipr: 0.6 },
        ];
        assert_eq!(best_at_matched_noise(&curve, 0.3).unwrap().k, 2);
        assert_eq!(k_for_perfect_recall(&curve), Some(3));
        assert!(best_at_matched_noise(&curve, 0.05).is_none());
    }
}

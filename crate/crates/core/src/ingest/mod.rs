//! Page-by-page construction of a [`DocumentGraph`].
//!
//! Each page is parsed into nodes, linked to what came before, and folded
//! into a [`RunningMemory`]. Layout edges are rule-based. Cross-references,
//! continuations and the memory's entities and dangling references come from
//! the chat model when the gateway has one; without a chat model,
//! pre-extracted input is ingested with the rules alone.

mod edges;
mod llm;
mod memory;
mod parse;
mod prompts;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::gateway::{Gateway, GatewayError, INGESTION_MAX_TOKENS};
use crate::index::{IndexError, NeuralIndex};
use crate::json::truncate_chars;
use crate::model::{validate_graph, DocumentGraph, EdgeType, GraphEdge, GraphNode, NodeId, RunningMemory};
use crate::symbolic::{louvain_partition, SymbolicError};

pub use edges::{extract_edges, rule_edges, EdgeExtraction};
pub use memory::{header_depth, update_memory, MemoryUpdate};
pub use parse::{pages_from_json, parse_page, ElementDraft, PageInput, PageSource, ParsedPage};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{0}")]
    Precondition(String),
    #[error("input: {0}")]
    Input(String),
    #[error("page {page}, element {index}: {reason}")]
    InvalidElement { page: u32, index: usize, reason: String },
    #[error("page {page}: {stage} reply is not usable JSON after a repair attempt")]
    PageParse { page: u32, stage: &'static str, raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("assembled graph is invalid: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl IngestError {
    /// Errors that would recur on every page.
    fn is_fatal(&self) -> bool {
        matches!(
            self,
            IngestError::Gateway(GatewayError::Authentication(_) | GatewayError::NotConfigured(_))
                | IngestError::Precondition(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    /// Abort on the first failed page instead of skipping it.
    pub fail_fast: bool,
    pub temperature: f64,
    pub max_tokens: u32,
    pub louvain_resolution: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { fail_fast: false, temperature: 0.0, max_tokens: INGESTION_MAX_TOKENS, louvain_resolution: 1.0 }
    }
}

/// How a node is shown to the model in ingestion prompts.
pub(crate) fn element_view(node: &GraphNode) -> Value {
    json!({
        "id": node.id,
        "type": node.element_type,
        "content": truncate_chars(&node.content, 400),
        "summary": truncate_chars(&node.summary, 300),
    })
}

/// The graph as it grows during ingestion.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    doc_id: String,
    nodes: BTreeMap<NodeId, GraphNode>,
    edges: BTreeMap<(NodeId, NodeId, EdgeType), GraphEdge>,
}

impl GraphBuilder {
    pub fn new(doc_id: impl Into<String>) -> Self {
        Self { doc_id: doc_id.into(), ..Default::default() }
    }

    pub fn add_nodes(&mut self, nodes: impl IntoIterator<Item = GraphNode>) {
        for node in nodes {
            self.nodes.insert(node.id, node);
        }
    }

    /// False when an edge with the same endpoints and type already exists.
    pub fn add_edge(&mut self, edge: GraphEdge) -> bool {
        let key = (edge.src, edge.dst, edge.edge_type);
        if self.edges.contains_key(&key) {
            return false;
        }
        self.edges.insert(key, edge);
        true
    }

    pub fn has_edge(&self, edge: &GraphEdge) -> bool {
        self.edges.contains_key(&(edge.src, edge.dst, edge.edge_type))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn nodes_on_page(&self, page: u32) -> Vec<&GraphNode> {
        self.nodes.range(NodeId::new(page, 0)..=NodeId::new(page, u32::MAX)).map(|(_, n)| n).collect()
    }

    /// The highest page below `page` that has nodes.
    pub fn last_page_before(&self, page: u32) -> Option<u32> {
        self.nodes.range(..NodeId::new(page, 0)).next_back().map(|(id, _)| id.page())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn finish(self, page_count: u32) -> DocumentGraph {
        DocumentGraph::from_parts(self.doc_id, page_count, self.nodes.into_values(), self.edges.into_values())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub doc_id: String,
    pub pages_processed: usize,
    pub failed_pages: Vec<u32>,
    pub nodes_created: usize,
    pub edges_created: BTreeMap<EdgeType, usize>,
    pub llm_calls: u64,
    pub warnings: Vec<String>,
}

fn check_page_order(pages: &[PageInput]) -> Result<(), IngestError> {
    let Some(first) = pages.first() else {
        return Err(IngestError::Precondition("a document needs at least one page".into()));
    };
    if first.page_number != 1 {
        return Err(IngestError::Precondition(format!("first page is {}, expected 1", first.page_number)));
    }
    for pair in pages.windows(2) {
        if pair[1].page_number <= pair[0].page_number {
            return Err(IngestError::Precondition(format!(
                "page {} follows page {}; pages must be strictly ascending",
                pair[1].page_number, pair[0].page_number
            )));
        }
    }
    Ok(())
}

/// Folds one page into the builder and memory. Model failures in the edge
/// and memory steps degrade to the rule-based result unless failing fast.
fn ingest_page(
    page: &PageInput,
    builder: &mut GraphBuilder,
    memory: &RunningMemory,
    gateway: &Gateway,
    options: &IngestOptions,
    warnings: &mut Vec<String>,
) -> Result<RunningMemory, IngestError> {
    let parsed = parse_page(page, gateway, options)?;
    warnings.extend(parsed.warnings);
    let nodes = parsed.nodes;
    if nodes.is_empty() {
        warnings.push(format!("page {}: no elements", page.page_number));
        return Ok(memory.clone());
    }
    builder.add_nodes(nodes.iter().cloned());

    let edges = match extract_edges(memory, &nodes, builder, gateway, options) {
        Ok(out) => {
            warnings.extend(out.warnings);
            out.edges
        }
        Err(e) if !options.fail_fast && !e.is_fatal() => {
            warnings.push(format!("page {}: edge extraction failed, layout edges only: {e}", page.page_number));
            rule_edges(memory, &nodes)
        }
        Err(e) => return Err(e),
    };
    let mut touched = BTreeSet::new();
    for edge in edges {
        if matches!(edge.edge_type, EdgeType::RefersTo | EdgeType::ContinuesOn) {
            touched.extend([edge.src, edge.dst]);
        }
        builder.add_edge(edge);
    }

    let mut next = match update_memory(memory, &nodes, builder, gateway, options) {
        Ok(out) => {
            warnings.extend(out.warnings);
            out.memory
        }
        Err(e) if !options.fail_fast && !e.is_fatal() => {
            warnings.push(format!("page {}: memory update failed, sections only: {e}", page.page_number));
            let mut m = memory.clone();
            memory::push_headers(&mut m, &nodes);
            m.last_page = page.page_number;
            m
        }
        Err(e) => return Err(e),
    };
    // A reference is settled once the page links its source somewhere.
    next.unresolved_refs.retain(|r| !touched.contains(&r.src));
    debug_assert!(next.is_causal_up_to(page.page_number));
    Ok(next)
}

/// Reads every page in order and assembles the document graph with its
/// community partition.
///
/// A page that fails is skipped with a warning (its nodes are rolled back)
/// unless `options.fail_fast` is set. Authentication and configuration
/// errors always abort.
pub fn ingest_document(
    doc_id: &str,
    pages: &[PageInput],
    gateway: &Gateway,
    options: &IngestOptions,
) -> Result<(DocumentGraph, IngestionReport), IngestError> {
    check_page_order(pages)?;
    let calls_before = gateway.usage().calls;
    let mut builder = GraphBuilder::new(doc_id);
    let mut memory = RunningMemory::new();
    let mut report = IngestionReport { doc_id: doc_id.to_string(), ..Default::default() };

    for page in pages {
        let checkpoint = builder.clone();
        let mut warnings = Vec::new();
        match ingest_page(page, &mut builder, &memory, gateway, options, &mut warnings) {
            Ok(next) => {
                memory = next;
                report.pages_processed += 1;
            }
            Err(e) if options.fail_fast || e.is_fatal() => return Err(e),
            Err(e) => {
                log::warn!("skipping page {}: {e}", page.page_number);
                builder = checkpoint;
                report.failed_pages.push(page.page_number);
                warnings.push(format!("page {} skipped: {e}", page.page_number));
            }
        }
        for w in &warnings {
            log::debug!("{w}");
        }
        report.warnings.extend(warnings);
    }

    let page_count = pages.last().map_or(0, |p| p.page_number);
    let mut graph = builder.finish(page_count);
    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        let detail: Vec<String> = violations.iter().map(|v| format!("{v}")).collect();
        return Err(IngestError::InvalidGraph(detail.join("; ")));
    }
    if !graph.is_empty() {
        let partition = louvain_partition(&graph, options.louvain_resolution)?;
        graph = graph.with_communities(partition);
    }
    report.nodes_created = graph.node_count();
    report.edges_created = graph.edge_type_counts();
    report.llm_calls = gateway.usage().calls - calls_before;
    Ok((graph, report))
}

/// [`ingest_document`] followed by embedding every node summary.
pub fn ingest_and_index(
    doc_id: &str,
    pages: &[PageInput],
    gateway: &Gateway,
    options: &IngestOptions,
) -> Result<(DocumentGraph, NeuralIndex, IngestionReport), IngestError> {
    let (graph, report) = ingest_document(doc_id, pages, gateway, options)?;
    let index = NeuralIndex::build(&graph, gateway)?;
    Ok((graph, index, report))
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "webp", "gif"];

/// Splits a file name into text and number runs so `page_10` sorts after
/// `page_9`.
fn natural_key(name: &str) -> Vec<(String, u64)> {
    let mut key = Vec::new();
    let mut chars = name.chars().peekable();
    while let Some(&c) = chars.peek() {
        let digits = c.is_ascii_digit();
        let mut run = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() != digits {
                break;
            }
            run.push(c);
            chars.next();
        }
        if digits {
            key.push((String::new(), run.parse().unwrap_or(u64::MAX)));
        } else {
            key.push((run.to_lowercase(), 0));
        }
    }
    key
}

/// One page per image file in `dir`, ordered by file name with numbers
/// compared by value.
pub fn pages_from_image_dir(dir: &Path) -> Result<Vec<PageInput>, IngestError> {
    let io = |source| IngestError::Io { path: dir.display().to_string(), source };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort_by_cached_key(|p| natural_key(&p.file_name().unwrap_or_default().to_string_lossy()));
    files
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let bytes =
                std::fs::read(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
            Ok(PageInput::image(i as u32 + 1, bytes))
        })
        .collect()
}

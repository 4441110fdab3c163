//! C interface to the document graph, the retrieval indices and the
//! evaluation metrics.
//!
//! Objects are opaque handles created by `*_load`/`*_build` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`LadragStatus`]; on failure, `ladrag_last_error` describes the most
//! recent error on the calling thread. Strings returned through `char **`
//! out-parameters are owned by the caller and must be released with
//! `ladrag_string_free`. Structured results are JSON text.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use ladrag::eval::{irrelevant_pages_ratio, perfect_recall};
use ladrag::gateway::{Gateway, HashingEmbedder};
use ladrag::index::{semantic_search, Bm25Index, IndexError, NeuralIndex, ScoredHit};
use ladrag::model::{deserialize_graph, serialize_graph, DocumentGraph, EdgeType, NodeId};
use ladrag::symbolic::{
    contextualize, execute_query, louvain_partition, neighbors, ContextPolicy, Direction, GraphQuery, SymbolicError,
};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadragStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidGraph = 4,
    UnknownNode = 5,
    InvalidQuery = 6,
    Index = 7,
    Io = 8,
    InvalidArgument = 9,
    Panic = 99,
}

/// Edge direction for `ladrag_graph_neighbors`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadragDirection {
    Out = 0,
    In = 1,
    Both = 2,
}

/// A loaded, validated document graph.
pub struct LadragGraph {
    graph: DocumentGraph,
}

/// A dense summary index.
pub struct LadragIndex {
    index: NeuralIndex,
}

/// A BM25 index over node summaries.
pub struct LadragBm25 {
    index: Bm25Index,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LadragStatus, String);

type Outcome<T> = Result<T, Failure>;

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Outcome<()>) -> LadragStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LadragStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LadragStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(Failure(LadragStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(LadragStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| Failure(LadragStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Outcome<()> {
    if out.is_null() {
        return Err(Failure(LadragStatus::NullArgument, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Outcome<()> {
    let c = CString::new(s).map_err(|_| Failure(LadragStatus::Parse, "string contains a nul byte".into()))?;
    put(out, c.into_raw())
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

fn node_id(raw: &str) -> Outcome<NodeId> {
    raw.parse().map_err(|e| Failure(LadragStatus::UnknownNode, format!("{e}")))
}

fn symbolic(e: SymbolicError) -> Failure {
    let status = match e {
        SymbolicError::UnknownNode(_) => LadragStatus::UnknownNode,
        SymbolicError::MalformedQuery { .. } => LadragStatus::InvalidQuery,
        SymbolicError::EmptyGraph | SymbolicError::NoCommunities => LadragStatus::InvalidGraph,
    };
    Failure(status, e.to_string())
}

fn index_failure(e: IndexError) -> Failure {
    let status = match e {
        IndexError::InvalidK => LadragStatus::InvalidArgument,
        IndexError::Format(_) => LadragStatus::Parse,
        _ => LadragStatus::Index,
    };
    Failure(status, e.to_string())
}

fn hits_json(hits: &[ScoredHit]) -> String {
    json(&hits)
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn ladrag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ladrag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ladrag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a graph from its JSON text.
///
/// # Safety
/// `json_text` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_from_json(json_text: *const c_char, out: *mut *mut LadragGraph) -> LadragStatus {
    guard(|| {
        let raw = text(json_text, "json_text")?;
        let graph = deserialize_graph(raw.as_bytes()).map_err(|e| {
            let status = match e {
                ladrag::model::GraphError::Invalid(_) => LadragStatus::InvalidGraph,
                _ => LadragStatus::Parse,
            };
            Failure(status, e.to_string())
        })?;
        put(out, Box::into_raw(Box::new(LadragGraph { graph })))
    })
}

/// Reads and validates a graph file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_load(path: *const c_char, out: *mut *mut LadragGraph) -> LadragStatus {
    let data = match text(path, "path") {
        Ok(p) => std::fs::read_to_string(p).map_err(|e| Failure(LadragStatus::Io, format!("{p}: {e}"))),
        Err(e) => Err(e),
    };
    match data
        .and_then(|d| CString::new(d).map_err(|_| Failure(LadragStatus::Parse, "file contains a nul byte".into())))
    {
        Ok(c) => ladrag_graph_from_json(c.as_ptr(), out),
        Err(Failure(status, message)) => {
            set_error(&message);
            status
        }
    }
}

/// # Safety
/// `graph` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_free(graph: *mut LadragGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Canonical JSON text of the graph.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_to_json(graph: *const LadragGraph, out: *mut *mut c_char) -> LadragStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let bytes = serialize_graph(&g.graph).map_err(|e| Failure(LadragStatus::InvalidGraph, e.to_string()))?;
        put_string(out, String::from_utf8(bytes).expect("JSON is UTF-8"))
    })
}

/// # Safety
/// `graph` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_counts(
    graph: *const LadragGraph,
    pages: *mut u32,
    nodes: *mut usize,
    edges: *mut usize,
) -> LadragStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.graph;
        put(pages, g.page_count())?;
        put(nodes, g.node_count())?;
        put(edges, g.edges().len())
    })
}

/// Runs a JSON graph query; the result is a JSON array of node ids.
///
/// # Safety
/// `graph` must be a live handle; `query_json` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_query(
    graph: *const LadragGraph,
    query_json: *const c_char,
    out: *mut *mut c_char,
) -> LadragStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let query = GraphQuery::parse(text(query_json, "query_json")?).map_err(symbolic)?;
        let ids = execute_query(&g.graph, &query).map_err(symbolic)?;
        put_string(out, json(&ids))
    })
}

/// Neighbors of `node` as a JSON array of ids. `edge_type` may be null for
/// any type.
///
/// # Safety
/// `graph` must be a live handle; strings nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_neighbors(
    graph: *const LadragGraph,
    node: *const c_char,
    edge_type: *const c_char,
    direction: LadragDirection,
    out: *mut *mut c_char,
) -> LadragStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let id = node_id(text(node, "node")?)?;
        let edge_type = if edge_type.is_null() {
            None
        } else {
            let raw = text(edge_type, "edge_type")?;
            Some(raw.parse::<EdgeType>().map_err(|e| Failure(LadragStatus::InvalidArgument, e))?)
        };
        let direction = match direction {
            LadragDirection::Out => Direction::Out,
            LadragDirection::In => Direction::In,
            LadragDirection::Both => Direction::Both,
        };
        let ids = neighbors(&g.graph, &id, edge_type, direction).map_err(symbolic)?;
        put_string(out, json(&ids))
    })
}

/// Recomputes the cached community partition.
///
/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_detect_communities(graph: *mut LadragGraph, resolution: f64) -> LadragStatus {
    guard(|| {
        if graph.is_null() {
            return Err(Failure(LadragStatus::NullArgument, "graph is null".into()));
        }
        if !resolution.is_finite() || resolution <= 0.0 {
            return Err(Failure(LadragStatus::InvalidArgument, "resolution must be positive".into()));
        }
        let g = &mut *graph;
        let partition = louvain_partition(&g.graph, resolution).map_err(symbolic)?;
        g.graph = g.graph.clone().with_communities(partition);
        Ok(())
    })
}

/// The node's community plus its section and continuation neighbors, as a
/// JSON array of ids.
///
/// # Safety
/// `graph` must be a live handle; `node` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_graph_contextualize(
    graph: *const LadragGraph,
    node: *const c_char,
    out: *mut *mut c_char,
) -> LadragStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let id = node_id(text(node, "node")?)?;
        let ids = contextualize(&g.graph, &id, &ContextPolicy::default()).map_err(symbolic)?;
        put_string(out, json(&ids))
    })
}

fn hashing_gateway(dimension: usize) -> Gateway {
    Gateway::offline(Arc::new(HashingEmbedder::new(dimension)))
}

/// Embeds every node summary with the built-in hashing embedder.
///
/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_index_build_hashing(
    graph: *const LadragGraph,
    dimension: usize,
    out: *mut *mut LadragIndex,
) -> LadragStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        if dimension == 0 {
            return Err(Failure(LadragStatus::InvalidArgument, "dimension must be positive".into()));
        }
        let index = NeuralIndex::build(&g.graph, &hashing_gateway(dimension)).map_err(index_failure)?;
        put(out, Box::into_raw(Box::new(LadragIndex { index })))
    })
}

/// Parses an index from its JSON text.
///
/// # Safety
/// `json_text` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_index_from_json(json_text: *const c_char, out: *mut *mut LadragIndex) -> LadragStatus {
    guard(|| {
        let raw = text(json_text, "json_text")?;
        let index = NeuralIndex::from_bytes(raw.as_bytes()).map_err(index_failure)?;
        put(out, Box::into_raw(Box::new(LadragIndex { index })))
    })
}

/// # Safety
/// `index` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_index_to_json(index: *const LadragIndex, out: *mut *mut c_char) -> LadragStatus {
    guard(|| {
        let idx = handle(index, "index")?;
        let bytes = idx.index.to_bytes().map_err(index_failure)?;
        put_string(out, String::from_utf8(bytes).expect("JSON is UTF-8"))
    })
}

/// Top-`k` nodes by cosine similarity, as JSON `[{"node", "score"}]`. Only
/// indices built with the hashing embedder can be queried here.
///
/// # Safety
/// `index` must be a live handle; `query` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_index_search(
    index: *const LadragIndex,
    query: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> LadragStatus {
    guard(|| {
        let idx = &handle(index, "index")?.index;
        let q = text(query, "query")?;
        let hits = semantic_search(idx, q, k, &hashing_gateway(idx.dimension)).map_err(index_failure)?;
        put_string(out, hits_json(&hits))
    })
}

/// # Safety
/// `index` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ladrag_index_free(index: *mut LadragIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_bm25_build(graph: *const LadragGraph, out: *mut *mut LadragBm25) -> LadragStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        put(out, Box::into_raw(Box::new(LadragBm25 { index: Bm25Index::build(&g.graph) })))
    })
}

/// Top-`k` BM25 hits as JSON `[{"node", "score"}]`.
///
/// # Safety
/// `bm25` must be a live handle; `query` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ladrag_bm25_search(
    bm25: *const LadragBm25,
    query: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> LadragStatus {
    guard(|| {
        let b = handle(bm25, "bm25")?;
        let hits = b.index.search(text(query, "query")?, k).map_err(index_failure)?;
        put_string(out, hits_json(&hits))
    })
}

/// # Safety
/// `bm25` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ladrag_bm25_free(bm25: *mut LadragBm25) {
    if !bm25.is_null() {
        drop(Box::from_raw(bm25));
    }
}

unsafe fn page_set(pages: *const u32, len: usize, what: &str) -> Outcome<BTreeSet<u32>> {
    if len == 0 {
        return Ok(BTreeSet::new());
    }
    if pages.is_null() {
        return Err(Failure(LadragStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(pages, len).iter().copied().collect())
}

/// 1 when every gold page was retrieved, else 0.
///
/// # Safety
/// Each array must hold at least its stated length (may be null when 0).
#[no_mangle]
pub unsafe extern "C" fn ladrag_perfect_recall(
    gold: *const u32,
    gold_len: usize,
    retrieved: *const u32,
    retrieved_len: usize,
    out: *mut u8,
) -> LadragStatus {
    guard(|| {
        let g = page_set(gold, gold_len, "gold")?;
        let r = page_set(retrieved, retrieved_len, "retrieved")?;
        put(out, perfect_recall(&g, &r))
    })
}

/// Share of retrieved pages outside the gold set (0 when none retrieved).
///
/// # Safety
/// Each array must hold at least its stated length (may be null when 0).
#[no_mangle]
pub unsafe extern "C" fn ladrag_irrelevant_pages_ratio(
    gold: *const u32,
    gold_len: usize,
    retrieved: *const u32,
    retrieved_len: usize,
    out: *mut f64,
) -> LadragStatus {
    guard(|| {
        let g = page_set(gold, gold_len, "gold")?;
        let r = page_set(retrieved, retrieved_len, "retrieved")?;
        put(out, irrelevant_pages_ratio(&g, &r))
    })
}

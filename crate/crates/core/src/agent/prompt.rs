use std::fmt::Write;

use super::AgentConfig;
use crate::model::DocumentGraph;

const PREAMBLE: &str = "You are a retrieval agent. Your job is to find every element of one document that is needed to answer a question, and as little else as possible. You do not answer the question yourself.

The document has been indexed as a graph. Each node is a page element (paragraph, table, figure, chart, caption, header, list, footnote, ...) with an id of the form p<page>_e<index> and a short summary. Edges connect elements: reading_order_next, caption_of, same_section, refers_to and continues_on.

Work in rounds. In each round reply with exactly one JSON object naming one tool, and nothing else:
{\"tool\": \"<tool name>\", \"args\": {...}}
The tool result is sent back to you. Plan first: decide whether the question is best served by meaning-based search, by structural filters (element types, pages, sections), or by both, and whether the answer may span several pages such as a table or a list that continues.";

const SEARCH_TOOL: &str = "- neuro_semantic_search {\"query\": string, \"k\": integer}: the k elements whose summaries are closest in meaning to the query.";

const GRAPH_TOOL: &str = "- symbolic_graph_query {\"filters\": [...], \"traverse\": {...}, \"limit\": integer}: elements matching structural filters, optionally expanded along edges. Syntax below.";

const CONTEXT_TOOL: &str = "- contextualize {\"node\": id}: the node's community of closely connected elements plus its section and continuation neighbors. Use it to pull in the rest of a multi-page table, list or section around a relevant hit.";

const FINISH_TOOL: &str = "- finish {\"evidence\": [id, ...], \"rationale\": string}: stop and return the ids you judge necessary. Only ids shown in earlier tool results count.";

const QUERY_SYNTAX: &str = "Graph query syntax. All filters must hold:
  {\"element_type\": [\"figure\", \"chart\"]}   element type is one of the listed
  {\"page\": [from, to]} or {\"page\": n}         page range, inclusive
  {\"content_contains\": \"text\"}              case-insensitive substring of the content
  {\"content_regex\": \"pattern\"}              regular expression over the content
  {\"visual_attribute\": {\"key\": k, \"value\": v}}
  {\"section\": \"title text\"}                 section headers containing the text and their members
\"traverse\": {\"edge_type\": t, \"direction\": \"out\" | \"in\" | \"both\", \"depth\": 1..DEPTH} expands the matches along edges (edge_type may be omitted for any type).
Example: {\"filters\": [{\"element_type\": [\"figure\"]}, {\"page\": [3, 5]}], \"limit\": 20}";

/// System prompt listing only the enabled tools.
pub fn system_prompt(graph: &DocumentGraph, config: &AgentConfig) -> String {
    let mut out = String::from(PREAMBLE);
    out.push_str("\n\nTools:\n");
    out.push_str(SEARCH_TOOL);
    out.push('\n');
    if config.enable_graph_query {
        out.push_str(GRAPH_TOOL);
        out.push('\n');
    }
    if config.enable_contextualize {
        out.push_str(CONTEXT_TOOL);
        out.push('\n');
    }
    out.push_str(FINISH_TOOL);
    out.push_str("\n\n");
    if config.enable_graph_query {
        out.push_str(&QUERY_SYNTAX.replace("DEPTH", &config.max_query_depth.to_string()));
        out.push_str("\n\n");
    }
    let _ = writeln!(
        out,
        "Document {:?}: {} pages, {} elements, {} edges.",
        graph.doc_id(),
        graph.page_count(),
        graph.node_count(),
        graph.edges().len()
    );
    let types: Vec<String> = graph.element_type_counts().iter().map(|(t, n)| format!("{t} {n}")).collect();
    let _ = writeln!(out, "Element types: {}.", types.join(", "));
    let edges: Vec<String> = graph.edge_type_counts().iter().map(|(t, n)| format!("{t} {n}")).collect();
    if !edges.is_empty() {
        let _ = writeln!(out, "Edge types: {}.", edges.join(", "));
    }
    if let Some(c) = graph.communities() {
        let _ = writeln!(out, "Communities: {}.", c.community_count());
    }
    let _ = write!(out, "You have at most {} rounds.", config.max_rounds);
    out
}

pub fn question_message(question: &str) -> String {
    format!("Question: {question}")
}

pub fn malformed_notice(reason: &str) -> String {
    format!("Your reply was not a valid tool call ({reason}). Reply with exactly one JSON object of the form {{\"tool\": ..., \"args\": {{...}}}}.")
}

pub fn disabled_notice(tool: &str) -> String {
    format!("The tool {tool} is disabled for this session. Use one of the listed tools instead.")
}

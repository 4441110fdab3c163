#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::{json, Value};

use ladrag::gateway::{ChatRequest, FnChat, Gateway, GatewayError, HashingEmbedder};
use ladrag::index::NeuralIndex;
use ladrag::ingest::{ingest_document, pages_from_json, ElementDraft, IngestOptions, PageInput};
use ladrag::model::{BoundingBox, DocumentGraph, ElementType};

pub const DIM: usize = 256;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Set LADRAG_BLESS=1 to rewrite golden files instead of comparing.
pub fn blessing() -> bool {
    std::env::var_os("LADRAG_BLESS").is_some_and(|v| v == "1")
}

pub fn hashing() -> Arc<HashingEmbedder> {
    Arc::new(HashingEmbedder::new(DIM))
}

pub fn offline() -> Gateway {
    Gateway::offline(hashing())
}

pub fn deck_raw() -> Value {
    serde_json::from_slice(&std::fs::read(fixture("deck/pages.json")).unwrap()).unwrap()
}

pub fn deck_pages() -> Vec<PageInput> {
    pages_from_json(&std::fs::read(fixture("deck/pages.json")).unwrap()).unwrap()
}

pub fn deck_images() -> Vec<PageInput> {
    (1..=5).map(|n| PageInput::image(n, format!("synthetic deck page {n}").into_bytes())).collect()
}

fn stage(request: &ChatRequest) -> &'static str {
    let system = &request.messages[0].content;
    if system.starts_with("You are a meticulous") {
        "extract"
    } else if system.starts_with("You maintain") {
        "memory"
    } else if system.starts_with("You link") {
        "edges"
    } else {
        "unknown"
    }
}

/// Page being ingested, read back from the request.
fn request_page(request: &ChatRequest) -> u32 {
    let user = &request.messages[1].content;
    if let Some(rest) = user.strip_prefix("Page ") {
        return rest.trim_end_matches('.').parse().unwrap();
    }
    let input: Value = serde_json::from_str(user).unwrap();
    if let Some(p) = input.get("page").and_then(Value::as_u64) {
        return p as u32;
    }
    let first = input["new_page"][0]["id"].as_str().unwrap();
    first[1..first.find('_').unwrap()].parse().unwrap()
}

const NO_CHANGE: &str = r#"{"entities": [], "unresolved_refs": [], "resolved_refs": [], "themes": []}"#;

/// Stands in for the vision model while ingesting the deck from page images.
pub fn deck_model() -> FnChat<impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync> {
    let raw = deck_raw();
    FnChat::new(move |request: &ChatRequest| {
        let page = request_page(request);
        let reply = match (stage(request), page) {
            ("extract", p) => json!({"elements": raw[(p - 1) as usize]}).to_string(),
            ("edges", 2) => r#"Here you go: {"edges": [{"src": "p1_e1", "dst": "p2_e1", "relation": "refers_to", "note": "Figure 1"}]}"#.into(),
            ("edges", 4) => r#"{"edges": [{"src": "p3_e2", "dst": "p4_e0", "relation": "continues_on", "note": "Table 1"}]}"#.into(),
            ("edges", 5) => r#"{"edges": [{"src": "p5_e1", "dst": "p2_e1", "relation": "refers_to", "note": "Figure 1"}, {"src": "p5_e1", "dst": "p9_e0", "relation": "refers_to"}]}"#.into(),
            ("edges", _) => r#"{"edges": []}"#.into(),
            ("memory", 1) => json!({
                "entities": [{"name": "Northwind", "mentions": ["p1_e0"]}],
                "unresolved_refs": [{"src": "p1_e1", "target_description": "Figure 1"}],
                "resolved_refs": [],
                "themes": ["FY2024 results"]
            })
            .to_string(),
            ("memory", 2) => json!({
                "entities": [{"name": "EMEA", "mentions": ["p2_e1", "p2_e3"]}],
                "unresolved_refs": [],
                "resolved_refs": ["p1_e1"],
                "themes": ["revenue growth"]
            })
            .to_string(),
            ("memory", _) => NO_CHANGE.into(),
            (other, p) => panic!("unexpected {other} request for page {p}"),
        };
        Ok(reply)
    })
}

// ---- the 20-page report with a reference list split across pages ----

fn el(ty: ElementType, y: f64, text: &str) -> ElementDraft {
    ElementDraft {
        element_type: ty,
        bbox: BoundingBox::new(0.08, y, 0.92, (y + 0.12).min(1.0)),
        content: text.into(),
        summary: text.into(),
        visual_attributes: Default::default(),
    }
}

fn header(y: f64, text: &str) -> ElementDraft {
    let mut e = el(ElementType::SectionHeader, y, text);
    e.visual_attributes.insert("level".into(), "1".into());
    e
}

const TOPICS: [&str; 14] = [
    "OCR pipelines",
    "Table detection",
    "Table structure recognition",
    "Chart understanding",
    "Figure captioning",
    "Reading order",
    "Key-value extraction",
    "Form understanding",
    "Multi-page documents",
    "Datasets",
    "Evaluation metrics",
    "Efficiency",
    "Multilingual documents",
    "Open problems",
];

/// Pages 18 to 20 answer [`MAIN_QUESTION`]: a paragraph citing [31]-[36] and
/// the reference list, which spills over from page 19 to page 20. Every
/// other page talks about layout-aware parsing in the question's own words.
pub fn report_pages() -> Vec<PageInput> {
    let mut pages = vec![vec![
        el(ElementType::Title, 0.05, "A Survey of Document Parsing Systems"),
        el(ElementType::Paragraph, 0.3, "We review systems that turn scanned pages into structured data."),
    ]];
    pages.push(vec![
        header(0.05, "Introduction"),
        el(
            ElementType::Paragraph,
            0.2,
            "Layout-aware parsing of visually rich documents is the theme of this survey; which parsing methods are cited for visually rich documents?",
        ),
    ]);
    for topic in TOPICS {
        let mut elements = vec![
            header(0.05, topic),
            el(
                ElementType::Paragraph,
                0.2,
                &format!("{topic} for layout-aware parsing of visually rich documents; references for {topic} parsing are cited for visually rich documents."),
            ),
        ];
        match topic {
            "Chart understanding" => {
                elements.push(el(ElementType::Chart, 0.4, "Line chart of chart question answering accuracy rising from 41 to 78 percent between 2019 and 2024."));
                elements.push(el(ElementType::Caption, 0.55, "Figure 4: chart QA accuracy by year"));
            }
            "Datasets" => {
                elements.push(el(ElementType::Caption, 0.35, "Table 2: dataset sizes"));
                elements.push(el(
                    ElementType::Table,
                    0.5,
                    "Dataset | Pages\nDocVQA | 12767\nMMLongBench | 6529\nFinanceBench | 53399",
                ));
            }
            "Evaluation metrics" => {
                elements.push(el(
                    ElementType::Paragraph,
                    0.45,
                    "Reading order is scored with edit distance over element sequences.",
                ));
            }
            _ => {}
        }
        pages.push(elements);
    }
    pages.push(vec![
        header(0.05, "Conclusion"),
        el(ElementType::Paragraph, 0.2, "Parsing quality still limits downstream question answering."),
    ]);
    pages.push(vec![
        header(0.05, "Related work"),
        el(ElementType::Paragraph, 0.2, "Prior systems [31] to [36] combine OCR tokens with 2D position embeddings."),
    ]);
    pages.push(vec![
        header(0.05, "References"),
        el(
            ElementType::List,
            0.2,
            "[31] Xu et al. LayoutLM: pre-training of text and layout. KDD 2020.\n[32] Huang et al. LayoutLMv3: unified text and image masking. ACM MM 2022.\n[33] Kim et al. Donut: OCR-free document understanding transformer. ECCV 2022.",
        ),
    ]);
    pages.push(vec![
        el(
            ElementType::List,
            0.05,
            "[34] Lee et al. Pix2Struct: screenshot parsing as pretraining. ICML 2023.\n[35] Appalaraju et al. DocFormer: end-to-end transformer. ICCV 2021.\n[36] Tang et al. UDOP: unifying vision, text and layout. CVPR 2023.",
        ),
        el(ElementType::Other, 0.93, "20"),
    ]);
    pages.into_iter().enumerate().map(|(i, e)| PageInput::pre_extracted(i as u32 + 1, e)).collect()
}

pub const MAIN_QUESTION: &str = "Which references are cited for layout-aware parsing of visually rich documents?";

pub fn main_gold() -> BTreeSet<u32> {
    [18, 19, 20].into()
}

/// Ingestion model for the report: cross-page links only, no memory changes.
fn report_model() -> FnChat<impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync> {
    FnChat::new(|request: &ChatRequest| {
        Ok(match (stage(request), request_page(request)) {
            ("edges", 19) => r#"{"edges": [{"src": "p18_e1", "dst": "p19_e1", "relation": "refers_to", "note": "cites [31]-[33]"}]}"#.into(),
            ("edges", 20) => r#"{"edges": [{"src": "p19_e1", "dst": "p20_e0", "relation": "continues_on", "note": "reference list"}, {"src": "p18_e1", "dst": "p20_e0", "relation": "refers_to", "note": "cites [34]-[36]"}]}"#.into(),
            ("edges", _) => r#"{"edges": []}"#.into(),
            ("memory", _) => NO_CHANGE.into(),
            (other, p) => panic!("unexpected {other} request for page {p}"),
        })
    })
}

pub struct Report {
    pub graph: DocumentGraph,
    pub index: NeuralIndex,
}

pub fn report() -> Report {
    let gateway = Gateway::new(Arc::new(report_model()), hashing());
    let (graph, _) = ingest_document("survey", &report_pages(), &gateway, &IngestOptions::default()).unwrap();
    let index = NeuralIndex::build(&graph, &gateway).unwrap();
    Report { graph, index }
}

pub struct Case {
    pub id: &'static str,
    pub question: &'static str,
    pub gold: Vec<u32>,
    pub replies: Vec<String>,
}

fn search(query: &str, k: usize) -> String {
    json!({"tool": "neuro_semantic_search", "args": {"query": query, "k": k}}).to_string()
}

fn graph_query(args: Value) -> String {
    json!({"tool": "symbolic_graph_query", "args": args}).to_string()
}

fn ctx(node: &str) -> String {
    json!({"tool": "contextualize", "args": {"node": node}}).to_string()
}

fn finish(ids: &[&str]) -> String {
    json!({"tool": "finish", "args": {"evidence": ids, "rationale": "enough"}}).to_string()
}

/// Scripted agent turns for questions over [`report`]. The model's replies
/// are fixed; everything else (tool execution, grounding, accounting) is
/// the real loop.
pub fn suite() -> Vec<Case> {
    vec![
        Case {
            id: "refs",
            question: MAIN_QUESTION,
            gold: vec![18, 19, 20],
            replies: vec![
                search("references cited for layout-aware parsing", 5),
                graph_query(
                    json!({"filters": [{"content_contains": "[31]"}], "traverse": {"edge_type": "refers_to", "direction": "out", "depth": 1}}),
                ),
                ctx("p19_e1"),
                finish(&["p18_e1", "p19_e1", "p20_e0"]),
            ],
        },
        Case {
            id: "chart",
            question: "What does the chart about question answering accuracy show?",
            gold: vec![6],
            replies: vec![
                graph_query(json!({"filters": [{"element_type": ["chart"]}]})),
                ctx("p6_e2"),
                finish(&["p6_e2", "p6_e3"]),
            ],
        },
        Case {
            id: "datasets",
            question: "How many pages does MMLongBench contain?",
            gold: vec![12],
            replies: vec![
                search("MMLongBench pages dataset size", 3),
                graph_query(json!({"filters": [{"element_type": ["table"]}, {"content_contains": "MMLongBench"}]})),
                finish(&["p12_e3"]),
            ],
        },
        Case {
            id: "reading-order",
            question: "How is reading order evaluated?",
            gold: vec![8, 13],
            replies: vec![
                graph_query(json!({"filters": [{"content_regex": "(?i)reading order"}]})),
                finish(&["p8_e0", "p13_e2"]),
            ],
        },
        Case {
            id: "conclusion",
            question: "What limits downstream question answering?",
            gold: vec![17],
            replies: vec![search("limits downstream question answering", 2), ctx("p17_e1"), finish(&["p17_e1"])],
        },
        Case {
            id: "ocr-free",
            question: "Which cited model is OCR-free?",
            gold: vec![19],
            replies: vec![graph_query(json!({"filters": [{"section": "References"}]})), finish(&["p19_e1"])],
        },
        Case {
            id: "forms",
            question: "Which section covers form understanding?",
            gold: vec![10],
            replies: vec![
                graph_query(json!({"filters": [{"element_type": ["section_header"]}, {"content_contains": "form"}]})),
                ctx("p10_e0"),
                search("form understanding", 2),
                finish(&["p10_e0", "p10_e1"]),
            ],
        },
        Case {
            id: "title",
            question: "What is the title of the survey?",
            gold: vec![1],
            replies: vec![graph_query(json!({"filters": [{"element_type": ["title"]}]})), finish(&["p1_e0"])],
        },
        Case {
            id: "continuation",
            question: "Where does the reference list end?",
            gold: vec![19, 20],
            replies: vec![
                graph_query(
                    json!({"filters": [{"page": [19, 19]}, {"element_type": ["list"]}], "traverse": {"edge_type": "continues_on", "direction": "out", "depth": 2}}),
                ),
                ctx("p20_e0"),
                finish(&["p19_e1", "p20_e0"]),
            ],
        },
        Case {
            id: "wandering",
            question: "Summarize every efficiency result.",
            gold: vec![14],
            replies: vec![
                search("efficiency", 3),
                search("runtime", 3),
                search("latency", 3),
                graph_query(json!({"filters": [{"page": [14, 14]}]})),
                ctx("p14_e1"),
                search("throughput", 3),
                finish(&["p14_e0", "p14_e1"]),
            ],
        },
    ]
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::llm::complete_json;
use super::prompts::NODE_EXTRACTION;
use super::{IngestError, IngestOptions};
use crate::gateway::{ChatMessage, Gateway};
use crate::model::{BoundingBox, ElementType, GraphNode, NodeId};

/// An element before it has an id: the pre-extracted input format and the
/// shape the vision model is asked to produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementDraft {
    pub element_type: ElementType,
    pub bbox: BoundingBox,
    pub content: String,
    pub summary: String,
    #[serde(default)]
    pub visual_attributes: BTreeMap<String, String>,
}

impl ElementDraft {
    /// Lenient reading: `type` or `element_type` (free-form label), `bbox`
    /// as an object or a 4-array, non-string attribute values stringified,
    /// and a header `level` folded into the attributes.
    pub fn from_value(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("element is not an object")?;
        let label = obj
            .get("element_type")
            .or_else(|| obj.get("type"))
            .and_then(Value::as_str)
            .ok_or("missing element type")?;
        let bbox = match obj.get("bbox") {
            None | Some(Value::Null) => BoundingBox::FULL_PAGE,
            Some(v) => parse_bbox(v)?,
        };
        let text = |key: &str| obj.get(key).and_then(Value::as_str).unwrap_or_default().trim().to_string();
        let mut visual_attributes = BTreeMap::new();
        if let Some(attrs) = obj.get("visual_attributes") {
            let attrs = attrs.as_object().ok_or("visual_attributes is not an object")?;
            for (k, v) in attrs {
                visual_attributes.insert(k.clone(), attribute_string(v));
            }
        }
        if let Some(level) = obj.get("level").filter(|v| !v.is_null()) {
            visual_attributes.entry("level".to_string()).or_insert_with(|| attribute_string(level));
        }
        Ok(Self {
            element_type: ElementType::normalize(label),
            bbox,
            content: text("content"),
            summary: text("summary"),
            visual_attributes,
        })
    }
}

fn attribute_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_bbox(v: &Value) -> Result<BoundingBox, String> {
    let coords: Vec<f64> = match v {
        Value::Array(items) => {
            items.iter().map(|c| c.as_f64().ok_or("bbox coordinate is not a number")).collect::<Result<_, _>>()?
        }
        Value::Object(map) => ["x0", "y0", "x1", "y1"]
            .iter()
            .map(|k| map.get(*k).and_then(Value::as_f64).ok_or("bbox object needs numeric x0, y0, x1, y1"))
            .collect::<Result<_, _>>()?,
        _ => return Err("bbox must be an array or an object".into()),
    };
    match coords[..] {
        [x0, y0, x1, y1] => Ok(BoundingBox::new(x0, y0, x1, y1)),
        _ => Err(format!("bbox has {} coordinates", coords.len())),
    }
}

/// Clamps into the unit square and orders the corners.
fn sanitize_bbox(b: BoundingBox) -> BoundingBox {
    let c = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let (x0, x1) = (c(b.x0), c(b.x1));
    let (y0, y1) = (c(b.y0), c(b.y1));
    BoundingBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
}

#[derive(Clone, Debug, PartialEq)]
pub enum PageSource {
    Image(Vec<u8>),
    PreExtracted(Vec<ElementDraft>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageInput {
    pub page_number: u32,
    pub source: PageSource,
}

impl PageInput {
    pub fn image(page_number: u32, bytes: Vec<u8>) -> Self {
        Self { page_number, source: PageSource::Image(bytes) }
    }

    pub fn pre_extracted(page_number: u32, elements: Vec<ElementDraft>) -> Self {
        Self { page_number, source: PageSource::PreExtracted(elements) }
    }

    /// Exactly one of the two sources must be given.
    pub fn from_parts(
        page_number: u32,
        image: Option<Vec<u8>>,
        pre_extracted: Option<Vec<ElementDraft>>,
    ) -> Result<Self, IngestError> {
        match (image, pre_extracted) {
            (Some(bytes), None) => Ok(Self::image(page_number, bytes)),
            (None, Some(elements)) => Ok(Self::pre_extracted(page_number, elements)),
            _ => Err(IngestError::Precondition(format!(
                "page {page_number}: exactly one of image and pre-extracted elements is required"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedPage {
    pub nodes: Vec<GraphNode>,
    pub warnings: Vec<String>,
}

fn into_node(page: u32, index: u32, draft: ElementDraft) -> GraphNode {
    GraphNode {
        id: NodeId::new(page, index),
        page,
        element_type: draft.element_type,
        bbox: draft.bbox,
        content: draft.content,
        summary: draft.summary,
        visual_attributes: draft.visual_attributes,
    }
}

/// Turns one page into nodes `p{page}_e{i}` in reading order.
///
/// Pre-extracted elements are only checked and numbered: an empty summary
/// falls back to the content, and an element with neither, or with an
/// invalid box, is an error. Images go through the vision model.
pub fn parse_page(page: &PageInput, gateway: &Gateway, options: &IngestOptions) -> Result<ParsedPage, IngestError> {
    let n = page.page_number;
    if n == 0 {
        return Err(IngestError::Precondition("page numbers start at 1".into()));
    }
    match &page.source {
        PageSource::PreExtracted(drafts) => {
            let mut nodes = Vec::with_capacity(drafts.len());
            for (i, draft) in drafts.iter().enumerate() {
                let mut draft = draft.clone();
                if !draft.bbox.is_valid() {
                    return Err(IngestError::InvalidElement { page: n, index: i, reason: "invalid bbox".into() });
                }
                if draft.summary.trim().is_empty() {
                    if draft.content.trim().is_empty() {
                        return Err(IngestError::InvalidElement {
                            page: n,
                            index: i,
                            reason: "both summary and content are empty".into(),
                        });
                    }
                    draft.summary = draft.content.clone();
                }
                nodes.push(into_node(n, i as u32, draft));
            }
            Ok(ParsedPage { nodes, warnings: Vec::new() })
        }
        PageSource::Image(bytes) => {
            if !gateway.has_chat() {
                return Err(IngestError::Gateway(crate::gateway::GatewayError::NotConfigured(
                    "page images need a vision model".into(),
                )));
            }
            let messages = vec![
                ChatMessage::system(NODE_EXTRACTION),
                ChatMessage::user(format!("Page {n}.")).with_image(bytes.clone()),
            ];
            let drafts = complete_json(gateway, options, n, "element extraction", messages, drafts_from_reply)?;
            let mut warnings = Vec::new();
            let mut nodes = Vec::new();
            for (i, mut draft) in drafts.into_iter().enumerate() {
                if draft.summary.is_empty() {
                    draft.summary = draft.content.clone();
                }
                if draft.summary.is_empty() {
                    warnings.push(format!("page {n}: dropped element {i} with no content or summary"));
                    continue;
                }
                draft.bbox = sanitize_bbox(draft.bbox);
                nodes.push(into_node(n, nodes.len() as u32, draft));
            }
            Ok(ParsedPage { nodes, warnings })
        }
    }
}

fn drafts_from_reply(value: &Value) -> Result<Vec<ElementDraft>, String> {
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => map.get("elements").and_then(Value::as_array).ok_or("expected an \"elements\" array")?,
        _ => return Err("expected an object".into()),
    };
    items
        .iter()
        .enumerate()
        .map(|(i, v)| ElementDraft::from_value(v).map_err(|e| format!("element {i}: {e}")))
        .collect()
}

/// Reads the pre-extracted format: a JSON array of pages, each an array of
/// element objects. A `page` field on an element, when present, must match
/// its position.
pub fn pages_from_json(data: &[u8]) -> Result<Vec<PageInput>, IngestError> {
    let value: Value = serde_json::from_slice(data).map_err(|e| IngestError::Input(e.to_string()))?;
    let pages = value.as_array().ok_or_else(|| IngestError::Input("expected a JSON array of pages".into()))?;
    let mut out = Vec::with_capacity(pages.len());
    for (p, page) in pages.iter().enumerate() {
        let number = p as u32 + 1;
        let elements =
            page.as_array().ok_or_else(|| IngestError::Input(format!("page {number} is not an array of elements")))?;
        let mut drafts = Vec::with_capacity(elements.len());
        for (i, element) in elements.iter().enumerate() {
            if let Some(declared) = element.get("page").and_then(Value::as_u64) {
                if declared != u64::from(number) {
                    return Err(IngestError::Input(format!("page {number}, element {i}: declares page {declared}")));
                }
            }
            let draft = ElementDraft::from_value(element)
                .map_err(|e| IngestError::Input(format!("page {number}, element {i}: {e}")))?;
            drafts.push(draft);
        }
        out.push(PageInput::pre_extracted(number, drafts));
    }
    Ok(out)
}

//! Prompt text for the three ingestion calls.

pub const NODE_EXTRACTION: &str = r#"You are a meticulous document layout analyst. You will be shown one page of a multi-page document as an image.

Extract every visible element on the page, in natural reading order. An element is a localized unit such as a title, section header, paragraph, list, table, chart, figure, caption or footnote. Do not merge distinct elements and do not skip small ones (page numbers and running headers may be labeled "other").

For each element return:
- "type": one of title, section_header, paragraph, list, table, chart, figure, caption, footnote, other
- "bbox": [x0, y0, x1, y1] in normalized page coordinates (0..1, origin top-left)
- "content": the displayed content. For text, transcribe it. For tables, transcribe the cells row by row. For figures and charts, describe what is shown, including axis labels, legends and any numbers.
- "summary": a self-contained description that makes sense without seeing the page: say what the element is, what it is about and the key facts or values it carries.
- "visual_attributes": an object of string values describing font, size, color and emphasis when discernible
- "level": for section headers only, the heading level (1 = top level)

Reply with a single JSON object and nothing else:
{"elements": [{"type": "...", "bbox": [0.0, 0.0, 1.0, 1.0], "content": "...", "summary": "...", "visual_attributes": {}, "level": 1}]}"#;

pub const MEMORY_UPDATE: &str = r#"You maintain the running memory of a reader who is going through a document one page at a time.

The memory tracks:
- "entities": named things under discussion (organizations, products, metrics, people, datasets) and the element ids that mention them
- "unresolved_refs": references that point at something not yet seen, e.g. "see Figure 3" before Figure 3 appears, or a figure whose explanation is promised later
- "themes": short notes on how the document's topics progress

You receive the current memory and the elements of the newest page. Report only what changes. Use only element ids that appear in the memory or in the new page.

Reply with a single JSON object and nothing else:
{"entities": [{"name": "...", "mentions": ["p3_e1"]}],
 "unresolved_refs": [{"src": "p3_e2", "target_description": "Figure 3"}],
 "resolved_refs": ["p1_e4"],
 "themes": ["..."]}
"resolved_refs" lists the src ids of earlier unresolved references that the new page resolves."#;

pub const EDGE_EXTRACTION: &str = r#"You link the elements of a newly read page to the rest of a document graph.

Find two kinds of relations:
- "refers_to": one element refers to another, e.g. a paragraph citing a figure or table, a footnote pointing at a section, or a caption naming a chart elsewhere
- "continues_on": content that carries on across a page break, e.g. a table, list, reference section or paragraph that continues on the next page (src is the earlier part, dst the later part)

Layout relations (reading order, captions, section membership) are derived separately; do not report them.

You receive the running memory, the elements of the previous page and the elements of the new page. Every relation must involve at least one element of the new page, and may only use ids listed in the input.

Reply with a single JSON object and nothing else:
{"edges": [{"src": "p4_e2", "dst": "p2_e0", "relation": "refers_to", "note": "cites Figure 2"}]}
Return {"edges": []} when there is nothing to link."#;

pub fn repair_notice(error: &str) -> String {
    format!(
        "Your previous reply could not be used: {error}. Reply again with only the JSON object in the requested format, with no surrounding text."
    )
}

//! Document-level state accumulated while pages are read in order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub title: String,
    /// 1 for top-level sections.
    pub depth: u32,
    pub start_node: NodeId,
    /// Header font size when known, used to infer the depth of later headers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font_size: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedRef {
    pub src: NodeId,
    pub target_description: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMemory {
    pub section_stack: Vec<SectionEntry>,
    pub entities: BTreeMap<String, Vec<NodeId>>,
    pub unresolved_refs: Vec<UnresolvedRef>,
    pub themes: Vec<String>,
    /// Last page folded into this memory; 0 before the first page.
    pub last_page: u32,
}

impl RunningMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pushes a section, first popping every entry at the same or a deeper
    /// level.
    pub fn push_section(&mut self, entry: SectionEntry) {
        while self.section_stack.last().is_some_and(|top| top.depth >= entry.depth) {
            self.section_stack.pop();
        }
        self.section_stack.push(entry);
    }

    pub fn current_section(&self) -> Option<&SectionEntry> {
        self.section_stack.last()
    }

    pub fn add_mention(&mut self, entity: &str, node: NodeId) {
        let mentions = self.entities.entry(entity.to_string()).or_default();
        if !mentions.contains(&node) {
            mentions.push(node);
        }
    }

    /// Every node id the memory points at.
    pub fn referenced_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.section_stack
            .iter()
            .map(|s| s.start_node)
            .chain(self.entities.values().flatten().copied())
            .chain(self.unresolved_refs.iter().map(|r| r.src))
    }

    /// True when no entry refers to a page after `page`.
    pub fn is_causal_up_to(&self, page: u32) -> bool {
        self.referenced_nodes().all(|id| id.page() <= page)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section(title: &str, depth: u32, page: u32) -> SectionEntry {
        SectionEntry { title: title.into(), depth, start_node: NodeId::new(page, 0), font_size: None }
    }

    #[test]
    fn pushing_pops_same_or_deeper_levels() {
        let mut m = RunningMemory::new();
        m.push_section(section("Intro", 1, 1));
        m.push_section(section("Background", 2, 1));
        m.push_section(section("Details", 3, 2));
        m.push_section(section("Related", 2, 3));
        let titles: Vec<&str> = m.section_stack.iter().map(|s| s.title.as_str()).collect();
        assert_eq!(titles, ["Intro", "Related"]);
        m.push_section(section("Methods", 1, 4));
        assert_eq!(m.section_stack.len(), 1);
        assert_eq!(m.current_section().unwrap().title, "Methods");
    }

    #[test]
    fn causality_check_sees_all_entries() {
        let mut m = RunningMemory::new();
        m.push_section(section("Intro", 1, 1));
        m.add_mention("revenue", NodeId::new(2, 1));
        assert!(m.is_causal_up_to(2));
        assert!(!m.is_causal_up_to(1));
        m.unresolved_refs.push(UnresolvedRef { src: NodeId::new(3, 0), target_description: "Figure 3".into() });
        assert!(!m.is_causal_up_to(2));
    }
}

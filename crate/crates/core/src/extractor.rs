//! Class-grouped content extraction and interactive refinement.
//!
//! [`get_data`] walks every element that carries a `class` attribute and files its
//! subtree text under `class name → tag name`, keeping document order. The two
//! refinement operations narrow that mapping without touching the original.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dom::{DomGraph, FilterRule, TagSet, TraversalStats};

/// Tag name → ordered content strings. Serialized under `subclasses`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassData {
    pub subclasses: IndexMap<String, Vec<String>>,
}

/// class name (space-joined tokens) → tags → contents, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassContents {
    entries: IndexMap<String, ClassData>,
}

impl ClassContents {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one content string; empty keys or content are ignored.
    pub fn push(&mut self, class_name: &str, tag_name: &str, content: String) {
        if class_name.is_empty() || tag_name.is_empty() || content.is_empty() {
            return;
        }
        self.entries
            .entry(class_name.to_string())
            .or_default()
            .subclasses
            .entry(tag_name.to_string())
            .or_default()
            .push(content);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, class_name: &str) -> Option<&ClassData> {
        self.entries.get(class_name)
    }

    pub fn classes(&self) -> impl Iterator<Item = (&str, &ClassData)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Every `(class, tag, content)` triple in nested-loop order.
    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.entries.iter().flat_map(|(class, data)| {
            data.subclasses.iter().flat_map(move |(tag, contents)| {
                contents
                    .iter()
                    .map(move |c| (class.as_str(), tag.as_str(), c.as_str()))
            })
        })
    }

    pub fn triple_count(&self) -> usize {
        self.entries
            .values()
            .flat_map(|d| d.subclasses.values())
            .map(Vec::len)
            .sum()
    }

    /// Total UTF-8 bytes of stored content strings.
    pub fn content_bytes(&self) -> usize {
        self.triples().map(|(_, _, c)| c.len()).sum()
    }
}

/// How to restrict and post-process extraction. The default reproduces plain
/// class-grouped extraction.
#[derive(Debug, Clone, Default)]
pub struct ExtractOptions {
    /// Only elements with these tags are considered.
    pub tags: Option<TagSet>,
    /// Applied to each element's subtree text; each output string becomes a row.
    pub rule: FilterRule,
}

/// Class-grouped extraction with traversal counters: `n` is every node visited,
/// `m` the class-bearing nodes that yielded at least one content string.
pub fn extract(graph: &DomGraph, options: &ExtractOptions) -> (ClassContents, TraversalStats) {
    let mut contents = ClassContents::new();
    let mut relevant = 0u64;
    let order = graph.preorder();
    for &id in &order {
        let node = graph.node(id);
        if node.classes.is_empty() || !node.is_content_bearing() {
            continue;
        }
        if let Some(tags) = &options.tags {
            if !tags.contains(&node.tag) {
                continue;
            }
        }
        let class_name = node.classes.join(" ");
        let extracted = options.rule.apply_text(&graph.deep_text(id));
        if extracted.is_empty() {
            continue;
        }
        relevant += 1;
        for content in extracted {
            contents.push(&class_name, &node.tag, content);
        }
    }
    let stats = TraversalStats {
        n_visited: order.len() as u64,
        m_relevant: relevant,
    };
    (contents, stats)
}

/// Class-grouped extraction of every class-bearing element's subtree text.
pub fn get_data(graph: &DomGraph) -> ClassContents {
    extract(graph, &ExtractOptions::default()).0
}

fn contains_ci(haystack: &str, needle_lower: &str) -> bool {
    haystack.to_lowercase().contains(needle_lower)
}

/// Keeps only triples whose content contains `needle`, ignoring case.
pub fn search_by_string(contents: &ClassContents, needle: &str) -> ClassContents {
    let needle = needle.to_lowercase();
    let mut out = ClassContents::new();
    for (class, tag, content) in contents.triples() {
        if contains_ci(content, &needle) {
            out.push(class, tag, content.to_string());
        }
    }
    out
}

/// Keeps only the exact `class_name` key with everything under it.
pub fn refine_by_class(contents: &ClassContents, class_name: &str) -> ClassContents {
    let mut out = ClassContents::new();
    if let Some(data) = contents.entries.get(class_name) {
        out.entries.insert(class_name.to_string(), data.clone());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    StringSearch,
    ClassSelect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementQuery {
    pub mode: RefinementMode,
    pub needle: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("refinement needle must not be empty")]
pub struct EmptyNeedle;

impl RefinementQuery {
    pub fn new(mode: RefinementMode, needle: impl Into<String>) -> Result<Self, EmptyNeedle> {
        let needle = needle.into();
        if needle.is_empty() {
            return Err(EmptyNeedle);
        }
        Ok(RefinementQuery { mode, needle })
    }

    pub fn validate(&self) -> Result<(), EmptyNeedle> {
        if self.needle.is_empty() {
            Err(EmptyNeedle)
        } else {
            Ok(())
        }
    }

    pub fn apply(&self, contents: &ClassContents) -> ClassContents {
        match self.mode {
            RefinementMode::StringSearch => search_by_string(contents, &self.needle),
            RefinementMode::ClassSelect => refine_by_class(contents, &self.needle),
        }
    }
}

//! Page-as-graph model.
//!
//! A fetched document becomes a [`DomGraph`]: element nodes in a dense arena,
//! parent→child edges, and the text each element owns directly. Traversal,
//! tag selection and filtering live in [`traverse`].

mod encoding;
mod parse;
pub mod traverse;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encoding::decode_body;
pub use parse::{parse_html, parse_str};
pub use traverse::{
    apply_filter, efficiency, scrape_graph, traverse, FilterKind, FilterRule, Order, TagSet,
    TraversalStats,
};

/// Dense index of a node inside its [`DomGraph`].
pub type NodeId = usize;

/// Elements whose character data is never treated as readable content.
pub(crate) const NON_CONTENT_TAGS: &[&str] = &["script", "style", "template", "noscript"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomError {
    #[error("cannot decode document as {0}")]
    Encoding(String),
    #[error("document contains no elements")]
    EmptyDocument,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid filter rule: {0}")]
    InvalidRule(String),
    #[error("tag set must not be empty")]
    EmptyTagSet,
    #[error("invalid traversal stats: {0}")]
    InvalidStats(String),
}

/// A run of raw character data owned by an element, positioned relative to its children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct TextRun {
    /// Number of element children that precede this run.
    pub before_child: usize,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomNode {
    pub id: NodeId,
    pub tag: String,
    pub classes: Vec<String>,
    pub attributes: BTreeMap<String, String>,
    /// Text directly inside this element, whitespace-normalized. Descendant text is excluded.
    pub text: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    #[serde(skip)]
    pub(crate) runs: Vec<TextRun>,
}

impl DomNode {
    pub fn is_content_bearing(&self) -> bool {
        !NON_CONTENT_TAGS.contains(&self.tag.as_str())
    }
}

/// The document as a rooted tree `G = (V, E)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomGraph {
    nodes: Vec<DomNode>,
    root: NodeId,
}

impl DomGraph {
    /// Builds a graph from nodes, checking every structural invariant.
    pub fn from_nodes(nodes: Vec<DomNode>, root: NodeId) -> Result<Self, DomError> {
        let graph = DomGraph { nodes, root };
        graph.validate()?;
        Ok(graph)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[DomNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DomNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).sum()
    }

    /// Node ids in depth-first pre-order, which is also document order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id].children.iter().rev().copied());
        }
        out
    }

    /// Subtree text of `id`: character data of the element and all descendants,
    /// concatenated in document order and whitespace-normalized. Script and style
    /// content is skipped.
    pub fn deep_text(&self, id: NodeId) -> String {
        let mut raw = String::new();
        self.collect_text(id, &mut raw);
        normalize_whitespace(&raw)
    }

    fn collect_text(&self, id: NodeId, out: &mut String) {
        let node = &self.nodes[id];
        if !node.is_content_bearing() {
            return;
        }
        let mut runs = node.runs.iter().peekable();
        for (i, &child) in node.children.iter().enumerate() {
            while let Some(run) = runs.next_if(|r| r.before_child <= i) {
                out.push_str(&run.raw);
            }
            self.collect_text(child, out);
        }
        for run in runs {
            out.push_str(&run.raw);
        }
    }

    /// Indented outline of the tree; used to pin parser recovery behaviour in goldens.
    pub fn outline(&self) -> String {
        let mut out = String::new();
        self.outline_into(self.root, 0, &mut out);
        out
    }

    fn outline_into(&self, id: NodeId, depth: usize, out: &mut String) {
        let node = &self.nodes[id];
        let _ = write!(out, "{}<{}>", "  ".repeat(depth), node.tag);
        for (k, v) in &node.attributes {
            let _ = write!(out, " {k}={v:?}");
        }
        if !node.text.is_empty() {
            let _ = write!(out, " text={:?}", node.text);
        }
        out.push('\n');
        for &child in &node.children {
            self.outline_into(child, depth + 1, out);
        }
    }

    fn validate(&self) -> Result<(), DomError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(DomError::EmptyDocument);
        }
        if self.root >= n {
            return Err(DomError::InvalidGraph(format!(
                "root {} out of range",
                self.root
            )));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(DomError::InvalidGraph(format!(
                    "node at {i} has id {}",
                    node.id
                )));
            }
            if node.tag.is_empty() {
                return Err(DomError::InvalidGraph(format!("node {i} has empty tag")));
            }
            match node.parent {
                None if i != self.root => {
                    return Err(DomError::InvalidGraph(format!("node {i} has no parent")))
                }
                Some(_) if i == self.root => {
                    return Err(DomError::InvalidGraph("root has a parent".into()))
                }
                Some(p) if p >= n => {
                    return Err(DomError::InvalidGraph(format!(
                        "node {i} parent out of range"
                    )))
                }
                Some(p) => {
                    let listed = self.nodes[p].children.iter().filter(|&&c| c == i).count();
                    if listed != 1 {
                        return Err(DomError::InvalidGraph(format!(
                            "node {i} listed {listed} times by parent {p}"
                        )));
                    }
                }
                None => {}
            }
            for &c in &node.children {
                if c >= n || self.nodes[c].parent != Some(i) {
                    return Err(DomError::InvalidGraph(format!(
                        "child {c} of {i} disagrees"
                    )));
                }
            }
        }
        // Parent links are consistent, so reachability from root rules out cycles.
        if self.preorder_bounded().len() != n {
            return Err(DomError::InvalidGraph(
                "not all nodes reachable from root".into(),
            ));
        }
        Ok(())
    }

    fn preorder_bounded(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            out.push(id);
            stack.extend(self.nodes[id].children.iter().copied());
        }
        out
    }
}

/// Incremental construction of a [`DomGraph`], mostly for tests and synthetic trees.
#[derive(Debug, Default)]
pub struct DomGraphBuilder {
    nodes: Vec<DomNode>,
}

impl DomGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an element under `parent` (or as the root when `parent` is `None`).
    pub fn element(
        &mut self,
        parent: Option<NodeId>,
        tag: &str,
        classes: &[&str],
        text: &str,
    ) -> NodeId {
        let id = self.nodes.len();
        let mut attributes = BTreeMap::new();
        if !classes.is_empty() {
            attributes.insert("class".to_string(), classes.join(" "));
        }
        let runs = if text.is_empty() {
            Vec::new()
        } else {
            vec![TextRun {
                before_child: 0,
                raw: text.to_string(),
            }]
        };
        self.nodes.push(DomNode {
            id,
            tag: tag.to_ascii_lowercase(),
            classes: classes.iter().map(|c| c.to_string()).collect(),
            attributes,
            text: normalize_whitespace(text),
            parent,
            children: Vec::new(),
            runs,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    pub fn build(self) -> Result<DomGraph, DomError> {
        let root = self
            .nodes
            .iter()
            .position(|n| n.parent.is_none())
            .ok_or(DomError::EmptyDocument)?;
        DomGraph::from_nodes(self.nodes, root)
    }
}

/// Collapses whitespace runs to one space and trims both ends.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_trims() {
        assert_eq!(normalize_whitespace("  a \n\t b  "), "a b");
        assert_eq!(normalize_whitespace("   "), "");
    }

    #[test]
    fn builder_produces_valid_tree() {
        let mut b = DomGraphBuilder::new();
        let root = b.element(None, "html", &[], "");
        let body = b.element(Some(root), "body", &[], "");
        b.element(Some(body), "p", &["a"], "hi");
        let g = b.build().unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.deep_text(root), "hi");
    }

    #[test]
    fn rejects_inconsistent_links() {
        let mut b = DomGraphBuilder::new();
        let root = b.element(None, "html", &[], "");
        b.element(Some(root), "p", &[], "");
        let mut nodes = b.nodes;
        nodes[0].children.push(1);
        assert!(matches!(
            DomGraph::from_nodes(nodes, 0),
            Err(DomError::InvalidGraph(_))
        ));
    }

    #[test]
    fn rejects_second_parentless_node() {
        let mut b = DomGraphBuilder::new();
        b.element(None, "html", &[], "");
        b.element(None, "div", &[], "");
        assert!(matches!(
            DomGraph::from_nodes(b.nodes, 0),
            Err(DomError::InvalidGraph(_))
        ));
    }

    #[test]
    fn deep_text_interleaves_runs_and_children() {
        let g = parse_str("<div>a<b>b</b>c<i>d</i></div>").unwrap();
        assert_eq!(g.deep_text(g.root()), "abcd");
        let div = g.node(g.root()).children[0];
        assert_eq!(g.node(div).text, "ac");
    }
}

//! Traversal, tag membership, rule-based filtering and the instrumented scrape.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DomError, DomGraph, DomNode, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Dfs,
    Bfs,
}

/// The set of element names of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet(BTreeSet<String>);

impl TagSet {
    pub fn new<I, S>(tags: I) -> Result<Self, DomError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = tags
            .into_iter()
            .map(|t| t.as_ref().trim().to_ascii_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if set.is_empty() {
            return Err(DomError::EmptyTagSet);
        }
        Ok(TagSet(set))
    }

    /// Parses a comma-separated list such as `"p,div,li"`.
    pub fn parse_list(list: &str) -> Result<Self, DomError> {
        Self::new(list.split(','))
    }

    pub fn contains(&self, tag: &str) -> bool {
        if tag.bytes().any(|b| b.is_ascii_uppercase()) {
            self.0.contains(&tag.to_ascii_lowercase())
        } else {
            self.0.contains(tag)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Regex,
    Substring,
    PassThrough,
}

/// A validated extraction rule. Regexes are compiled at construction.
#[derive(Clone)]
pub struct FilterRule {
    kind: FilterKind,
    pattern: String,
    compiled: Option<Regex>,
}

impl fmt::Debug for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterRule")
            .field("kind", &self.kind)
            .field("pattern", &self.pattern)
            .finish()
    }
}

impl PartialEq for FilterRule {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.pattern == other.pattern
    }
}

impl Default for FilterRule {
    fn default() -> Self {
        Self::pass_through()
    }
}

impl FilterRule {
    pub fn pass_through() -> Self {
        FilterRule {
            kind: FilterKind::PassThrough,
            pattern: String::new(),
            compiled: None,
        }
    }

    pub fn substring(pattern: &str) -> Result<Self, DomError> {
        if pattern.is_empty() {
            return Err(DomError::InvalidRule("substring pattern is empty".into()));
        }
        Ok(FilterRule {
            kind: FilterKind::Substring,
            pattern: pattern.to_string(),
            compiled: None,
        })
    }

    pub fn regex(pattern: &str) -> Result<Self, DomError> {
        let compiled = Regex::new(pattern).map_err(|e| DomError::InvalidRule(e.to_string()))?;
        Ok(FilterRule {
            kind: FilterKind::Regex,
            pattern: pattern.to_string(),
            compiled: Some(compiled),
        })
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    /// Applies the rule to an arbitrary text value.
    pub fn apply_text(&self, text: &str) -> Vec<String> {
        if text.is_empty() {
            return Vec::new();
        }
        match self.kind {
            FilterKind::PassThrough => vec![text.to_string()],
            FilterKind::Substring => {
                if text.contains(&self.pattern) {
                    vec![text.to_string()]
                } else {
                    Vec::new()
                }
            }
            FilterKind::Regex => self
                .compiled
                .as_ref()
                .expect("regex rules are compiled at construction")
                .find_iter(text)
                .map(|m| m.as_str().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }
}

/// Counters collected during one traversal: `n` nodes visited, `m` of them relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraversalStats {
    pub n_visited: u64,
    pub m_relevant: u64,
}

impl TraversalStats {
    pub fn new(n_visited: u64, m_relevant: u64) -> Result<Self, DomError> {
        if m_relevant > n_visited {
            return Err(DomError::InvalidStats(format!(
                "m={m_relevant} exceeds n={n_visited}"
            )));
        }
        Ok(TraversalStats {
            n_visited,
            m_relevant,
        })
    }
}

fn visit_order(graph: &DomGraph, order: Order) -> Vec<NodeId> {
    match order {
        Order::Dfs => graph.preorder(),
        Order::Bfs => {
            let mut out = Vec::with_capacity(graph.len());
            let mut queue = VecDeque::from([graph.root()]);
            while let Some(id) = queue.pop_front() {
                out.push(id);
                queue.extend(graph.node(id).children.iter().copied());
            }
            out
        }
    }
}

/// Visits every node once and returns the ids whose tag is in `tags`, in visit order.
pub fn traverse(graph: &DomGraph, order: Order, tags: &TagSet) -> (Vec<NodeId>, TraversalStats) {
    let pass = FilterRule::pass_through();
    let visited = visit_order(graph, order);
    let matches: Vec<NodeId> = visited
        .iter()
        .copied()
        .filter(|&id| tags.contains(&graph.node(id).tag))
        .collect();
    let relevant = matches
        .iter()
        .filter(|&&id| !apply_filter(graph.node(id), &pass).is_empty())
        .count();
    let stats = TraversalStats {
        n_visited: visited.len() as u64,
        m_relevant: relevant as u64,
    };
    (matches, stats)
}

/// Filters the text a node owns directly.
pub fn apply_filter(node: &DomNode, rule: &FilterRule) -> Vec<String> {
    rule.apply_text(&node.text)
}

/// `m / n` for one traversal.
pub fn efficiency(stats: &TraversalStats) -> Result<f64, DomError> {
    if stats.n_visited == 0 {
        return Err(DomError::InvalidStats("no nodes visited".into()));
    }
    if stats.m_relevant > stats.n_visited {
        return Err(DomError::InvalidStats("m exceeds n".into()));
    }
    Ok(stats.m_relevant as f64 / stats.n_visited as f64)
}

/// Traverses `graph` depth-first, filters every node whose tag is in `tags`, and
/// keeps the non-empty results. `m_relevant` counts those nodes.
pub fn scrape_graph(
    graph: &DomGraph,
    tags: &TagSet,
    rule: &FilterRule,
) -> (Vec<(NodeId, Vec<String>)>, TraversalStats) {
    let visited = visit_order(graph, Order::Dfs);
    let extracted: Vec<(NodeId, Vec<String>)> = visited
        .iter()
        .copied()
        .filter(|&id| tags.contains(&graph.node(id).tag))
        .map(|id| (id, apply_filter(graph.node(id), rule)))
        .filter(|(_, out)| !out.is_empty())
        .collect();
    let stats = TraversalStats {
        n_visited: visited.len() as u64,
        m_relevant: extracted.len() as u64,
    };
    (extracted, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::DomGraphBuilder;

    /// html > body > (p "hi", div > p "")
    fn fixture() -> (DomGraph, [NodeId; 5]) {
        let mut b = DomGraphBuilder::new();
        let html = b.element(None, "html", &[], "");
        let body = b.element(Some(html), "body", &[], "");
        let p1 = b.element(Some(body), "p", &[], "hi");
        let div = b.element(Some(body), "div", &[], "");
        let p2 = b.element(Some(div), "p", &[], "");
        (b.build().unwrap(), [html, body, p1, div, p2])
    }

    fn fixture_with_text() -> DomGraph {
        let mut b = DomGraphBuilder::new();
        let html = b.element(None, "html", &[], "");
        let body = b.element(Some(html), "body", &[], "");
        b.element(Some(body), "p", &[], "one");
        let div = b.element(Some(body), "div", &[], "");
        b.element(Some(div), "p", &[], "two");
        b.build().unwrap()
    }

    #[test]
    fn traverse_counts_matching_text_nodes() {
        let g = fixture_with_text();
        let tags = TagSet::new(["p"]).unwrap();
        let (ids, stats) = traverse(&g, Order::Dfs, &tags);
        assert_eq!(ids, vec![2, 4]);
        assert_eq!(
            stats,
            TraversalStats {
                n_visited: 5,
                m_relevant: 2
            }
        );
    }

    #[test]
    fn traverse_absent_tag() {
        let (g, _) = fixture();
        let (ids, stats) = traverse(&g, Order::Bfs, &TagSet::new(["zzz"]).unwrap());
        assert!(ids.is_empty());
        assert_eq!(
            stats,
            TraversalStats {
                n_visited: 5,
                m_relevant: 0
            }
        );
    }

    #[test]
    fn chain_orders_agree() {
        let mut b = DomGraphBuilder::new();
        let mut parent = b.element(None, "div", &[], "a");
        for _ in 0..3 {
            parent = b.element(Some(parent), "div", &[], "a");
        }
        let g = b.build().unwrap();
        let tags = TagSet::new(["div"]).unwrap();
        assert_eq!(
            traverse(&g, Order::Dfs, &tags),
            traverse(&g, Order::Bfs, &tags)
        );
    }

    #[test]
    fn bfs_is_level_order() {
        let (g, [html, body, p1, div, p2]) = fixture();
        let tags = TagSet::new(["html", "body", "p", "div"]).unwrap();
        assert_eq!(
            traverse(&g, Order::Bfs, &tags).0,
            vec![html, body, p1, div, p2]
        );
        let mut b = DomGraphBuilder::new();
        let r = b.element(None, "r", &[], "");
        let a = b.element(Some(r), "a", &[], "");
        let c = b.element(Some(r), "c", &[], "");
        let a1 = b.element(Some(a), "x", &[], "");
        let g = b.build().unwrap();
        let all = TagSet::new(["r", "a", "c", "x"]).unwrap();
        assert_eq!(traverse(&g, Order::Dfs, &all).0, vec![r, a, a1, c]);
        assert_eq!(traverse(&g, Order::Bfs, &all).0, vec![r, a, c, a1]);
    }

    #[test]
    fn tagset_membership_is_case_insensitive() {
        let tags = TagSet::new(["P", " Div "]).unwrap();
        assert!(tags.contains("p"));
        assert!(tags.contains("DIV"));
        assert!(!tags.contains("span"));
        assert_eq!(TagSet::new(Vec::<&str>::new()), Err(DomError::EmptyTagSet));
        assert_eq!(TagSet::parse_list(" , "), Err(DomError::EmptyTagSet));
    }

    #[test]
    fn regex_filter_extracts_matches() {
        let mut b = DomGraphBuilder::new();
        let id = b.element(None, "p", &[], "Price: 42 USD");
        let g = b.build().unwrap();
        let rule = FilterRule::regex("[0-9]+").unwrap();
        assert_eq!(apply_filter(g.node(id), &rule), vec!["42"]);
        let multi = FilterRule::regex(r"\w+").unwrap();
        assert_eq!(apply_filter(g.node(id), &multi), vec!["Price", "42", "USD"]);
    }

    #[test]
    fn pass_through_and_empty_text() {
        let mut b = DomGraphBuilder::new();
        let root = b.element(None, "p", &[], "hello");
        let empty = b.element(Some(root), "p", &[], "");
        let g = b.build().unwrap();
        assert_eq!(
            apply_filter(g.node(root), &FilterRule::pass_through()),
            vec!["hello"]
        );
        for rule in [
            FilterRule::pass_through(),
            FilterRule::substring("x").unwrap(),
            FilterRule::regex(".*").unwrap(),
        ] {
            assert!(apply_filter(g.node(empty), &rule).is_empty());
        }
    }

    #[test]
    fn substring_filter() {
        let rule = FilterRule::substring("ell").unwrap();
        assert_eq!(rule.apply_text("hello"), vec!["hello"]);
        assert!(rule.apply_text("world").is_empty());
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(matches!(
            FilterRule::substring(""),
            Err(DomError::InvalidRule(_))
        ));
        assert!(matches!(
            FilterRule::regex("(unclosed"),
            Err(DomError::InvalidRule(_))
        ));
    }

    #[test]
    fn efficiency_ratios() {
        let e = |n, m| {
            efficiency(&TraversalStats {
                n_visited: n,
                m_relevant: m,
            })
        };
        assert_eq!(e(10, 4).unwrap(), 0.4);
        assert_eq!(e(7, 0).unwrap(), 0.0);
        assert_eq!(e(5, 5).unwrap(), 1.0);
        assert!(matches!(e(0, 0), Err(DomError::InvalidStats(_))));
        assert!(TraversalStats::new(3, 4).is_err());
    }

    #[test]
    fn scrape_graph_fixture() {
        let (g, [_, _, p1, _, _]) = fixture();
        let (out, stats) = scrape_graph(
            &g,
            &TagSet::new(["p"]).unwrap(),
            &FilterRule::pass_through(),
        );
        assert_eq!(out, vec![(p1, vec!["hi".to_string()])]);
        assert_eq!(
            stats,
            TraversalStats {
                n_visited: 5,
                m_relevant: 1
            }
        );
    }

    #[test]
    fn scrape_graph_no_match_and_single_node() {
        let (g, _) = fixture();
        let (out, stats) = scrape_graph(
            &g,
            &TagSet::new(["table"]).unwrap(),
            &FilterRule::pass_through(),
        );
        assert!(out.is_empty());
        assert_eq!(
            stats,
            TraversalStats {
                n_visited: 5,
                m_relevant: 0
            }
        );

        let mut b = DomGraphBuilder::new();
        let root = b.element(None, "html", &[], "x");
        let g = b.build().unwrap();
        let (out, stats) = scrape_graph(
            &g,
            &TagSet::new(["html"]).unwrap(),
            &FilterRule::pass_through(),
        );
        assert_eq!(out, vec![(root, vec!["x".to_string()])]);
        assert_eq!(
            stats,
            TraversalStats {
                n_visited: 1,
                m_relevant: 1
            }
        );
    }
}

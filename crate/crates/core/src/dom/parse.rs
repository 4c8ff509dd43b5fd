//! Tolerant HTML tokenizer and tree builder.
//!
//! Recovery rules (pinned by the golden files under `tests/goldens/parse`):
//! - unknown or mismatched end tags are ignored; a matching end tag closes every
//!   element opened after its partner;
//! - void elements never receive children, `/>` is honoured only inside svg/math;
//! - `p`, `li`, `dt`/`dd`, `option`, table rows/cells and headings close their
//!   open predecessor the way browsers do;
//! - `</body>` and `</html>` do not close anything, so trailing content stays inside;
//! - if the document has no `html` element one is synthesized as the root and all
//!   top-level content is placed under it; content outside an explicit `html`
//!   element is moved inside it, preserving document order;
//! - comments, doctypes and processing instructions are dropped; an unterminated tag
//!   at end of input is dropped.

use std::collections::BTreeMap;

use super::{normalize_whitespace, DomError, DomGraph, DomNode, NodeId, TextRun};

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "keygen", "link", "meta", "param",
    "source", "track", "wbr",
];

const RAWTEXT: &[&str] = &[
    "script", "style", "xmp", "iframe", "noembed", "noframes", "noscript",
];
const RCDATA: &[&str] = &["title", "textarea"];

/// Start tags that implicitly close an open `p`.
const CLOSES_P: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "center",
    "details",
    "dialog",
    "dir",
    "div",
    "dl",
    "fieldset",
    "figcaption",
    "figure",
    "footer",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "header",
    "hgroup",
    "hr",
    "li",
    "dd",
    "dt",
    "main",
    "menu",
    "nav",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "ul",
];

const HEADINGS: &[&str] = &["h1", "h2", "h3", "h4", "h5", "h6"];

/// Parses a raw response body into a [`DomGraph`].
pub fn parse_html(body: &[u8], encoding_hint: Option<&str>) -> Result<DomGraph, DomError> {
    if body.is_empty() {
        return Err(DomError::EmptyDocument);
    }
    let text = super::decode_body(body, encoding_hint)?;
    parse_str(&text)
}

/// Parses already-decoded markup.
pub fn parse_str(input: &str) -> Result<DomGraph, DomError> {
    let mut builder = TreeBuilder::new();
    let mut tokenizer = Tokenizer::new(input);
    while let Some(token) = tokenizer.next_token() {
        if let Token::Start { name, .. } = &token {
            if RAWTEXT.contains(&name.as_str()) {
                tokenizer.raw_until = Some((name.clone(), false));
            } else if RCDATA.contains(&name.as_str()) {
                tokenizer.raw_until = Some((name.clone(), true));
            }
        }
        builder.process(token);
    }
    builder.finish()
}

#[derive(Debug, PartialEq)]
enum Token {
    Start {
        name: String,
        attrs: Vec<(String, String)>,
        self_closing: bool,
    },
    End {
        name: String,
    },
    Text(String),
}

struct Tokenizer<'a> {
    src: &'a str,
    pos: usize,
    /// Set after a raw-text start tag: element name and whether entities are decoded.
    raw_until: Option<(String, bool)>,
}

impl<'a> Tokenizer<'a> {
    fn new(src: &'a str) -> Self {
        Tokenizer {
            src,
            pos: 0,
            raw_until: None,
        }
    }

    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn peek(&self, offset: usize) -> Option<u8> {
        self.bytes().get(self.pos + offset).copied()
    }

    fn next_token(&mut self) -> Option<Token> {
        if let Some((name, decode)) = self.raw_until.take() {
            if let Some(text) = self.raw_text(&name, decode) {
                return Some(text);
            }
        }
        loop {
            if self.pos >= self.src.len() {
                return None;
            }
            if self.peek(0) == Some(b'<') {
                match self.peek(1) {
                    Some(c) if c.is_ascii_alphabetic() => {
                        if let Some(tok) = self.start_tag() {
                            return Some(tok);
                        }
                        return None;
                    }
                    Some(b'/') => match self.peek(2) {
                        Some(c) if c.is_ascii_alphabetic() => {
                            if let Some(tok) = self.end_tag() {
                                return Some(tok);
                            }
                            return None;
                        }
                        Some(b'>') => {
                            self.pos += 3;
                            continue;
                        }
                        None => {
                            self.pos = self.src.len();
                            return None;
                        }
                        Some(_) => {
                            self.bogus_comment();
                            continue;
                        }
                    },
                    Some(b'!') => {
                        if self.src[self.pos..].starts_with("<!--") {
                            self.comment();
                        } else {
                            self.bogus_comment();
                        }
                        continue;
                    }
                    Some(b'?') => {
                        self.bogus_comment();
                        continue;
                    }
                    _ => {}
                }
            }
            return Some(self.text());
        }
    }

    fn text(&mut self) -> Token {
        let start = self.pos;
        // Always consume at least one byte so a literal '<' makes progress.
        let mut end = start + 1;
        while end < self.src.len() && self.bytes()[end] != b'<' {
            end += 1;
        }
        self.pos = end;
        Token::Text(decode_entities(&self.src[start..end]))
    }

    fn raw_text(&mut self, name: &str, decode: bool) -> Option<Token> {
        let rest = &self.src[self.pos..];
        let lower = rest.to_ascii_lowercase();
        let needle = format!("</{name}");
        let mut search = 0;
        let end = loop {
            match lower[search..].find(&needle) {
                Some(i) => {
                    let at = search + i;
                    match lower.as_bytes().get(at + needle.len()) {
                        None | Some(b'>' | b'/' | b' ' | b'\t' | b'\n' | b'\r' | b'\x0c') => {
                            break at
                        }
                        _ => search = at + needle.len(),
                    }
                }
                None => break rest.len(),
            }
        };
        let raw = &rest[..end];
        self.pos += end;
        if raw.is_empty() {
            return None;
        }
        Some(Token::Text(if decode {
            decode_entities(raw)
        } else {
            raw.to_string()
        }))
    }

    fn comment(&mut self) {
        let body = self.pos + 4;
        self.pos = match self.src[body..].find("-->") {
            Some(i) => body + i + 3,
            None => self.src.len(),
        };
    }

    fn bogus_comment(&mut self) {
        self.pos = match self.src[self.pos..].find('>') {
            Some(i) => self.pos + i + 1,
            None => self.src.len(),
        };
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(0), Some(b' ' | b'\t' | b'\n' | b'\r' | b'\x0c')) {
            self.pos += 1;
        }
    }

    fn read_name(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek(0) {
            if matches!(c, b' ' | b'\t' | b'\n' | b'\r' | b'\x0c' | b'/' | b'>') {
                break;
            }
            self.pos += 1;
        }
        self.src[start..self.pos].to_ascii_lowercase()
    }

    fn start_tag(&mut self) -> Option<Token> {
        self.pos += 1;
        let name = self.read_name();
        let mut attrs: Vec<(String, String)> = Vec::new();
        let mut self_closing = false;
        loop {
            self.skip_ws();
            match self.peek(0) {
                None => {
                    self.pos = self.src.len();
                    return None;
                }
                Some(b'>') => {
                    self.pos += 1;
                    break;
                }
                Some(b'/') => {
                    self.pos += 1;
                    if self.peek(0) == Some(b'>') {
                        self_closing = true;
                        self.pos += 1;
                        break;
                    }
                }
                Some(_) => {
                    let (key, value) = self.attribute()?;
                    if !key.is_empty() && !attrs.iter().any(|(k, _)| *k == key) {
                        attrs.push((key, value));
                    }
                }
            }
        }
        Some(Token::Start {
            name,
            attrs,
            self_closing,
        })
    }

    fn attribute(&mut self) -> Option<(String, String)> {
        let start = self.pos;
        // A leading '=' belongs to the name.
        if self.peek(0) == Some(b'=') {
            self.pos += 1;
        }
        while let Some(c) = self.peek(0) {
            if matches!(
                c,
                b' ' | b'\t' | b'\n' | b'\r' | b'\x0c' | b'/' | b'>' | b'='
            ) {
                break;
            }
            self.pos += 1;
        }
        let key = self.src[start..self.pos].to_ascii_lowercase();
        self.skip_ws();
        if self.peek(0) != Some(b'=') {
            return Some((key, String::new()));
        }
        self.pos += 1;
        self.skip_ws();
        let value = match self.peek(0) {
            None => return None,
            Some(q @ (b'"' | b'\'')) => {
                self.pos += 1;
                let rest = &self.src[self.pos..];
                let end = rest.find(q as char)?;
                let raw = &rest[..end];
                self.pos += end + 1;
                raw
            }
            Some(_) => {
                let start = self.pos;
                while let Some(c) = self.peek(0) {
                    if matches!(c, b' ' | b'\t' | b'\n' | b'\r' | b'\x0c' | b'>') {
                        break;
                    }
                    self.pos += 1;
                }
                &self.src[start..self.pos]
            }
        };
        Some((key, decode_entities(value)))
    }

    fn end_tag(&mut self) -> Option<Token> {
        self.pos += 2;
        let name = self.read_name();
        match self.src[self.pos..].find('>') {
            Some(i) => self.pos += i + 1,
            None => {
                self.pos = self.src.len();
                return None;
            }
        }
        Some(Token::End { name })
    }
}

fn decode_entities(s: &str) -> String {
    if s.contains('&') {
        html_escape::decode_html_entities(s).into_owned()
    } else {
        s.to_string()
    }
}

enum Content {
    Text(String),
    Child(usize),
}

struct RawNode {
    tag: String,
    attrs: Vec<(String, String)>,
    content: Vec<Content>,
}

const DOCUMENT: usize = 0;

struct TreeBuilder {
    arena: Vec<RawNode>,
    /// Open elements; index 0 is always the document container.
    stack: Vec<usize>,
}

impl TreeBuilder {
    fn new() -> Self {
        TreeBuilder {
            arena: vec![RawNode {
                tag: "#document".into(),
                attrs: Vec::new(),
                content: Vec::new(),
            }],
            stack: vec![DOCUMENT],
        }
    }

    fn current(&self) -> usize {
        *self.stack.last().expect("document is never popped")
    }

    fn tag_of(&self, id: usize) -> &str {
        &self.arena[id].tag
    }

    fn process(&mut self, token: Token) {
        match token {
            Token::Text(text) => self.insert_text(text),
            Token::Start {
                name,
                attrs,
                self_closing,
            } => self.start(name, attrs, self_closing),
            Token::End { name } => self.end(&name),
        }
    }

    fn insert_text(&mut self, text: String) {
        let cur = self.current();
        match self.arena[cur].content.last_mut() {
            Some(Content::Text(prev)) => prev.push_str(&text),
            _ => self.arena[cur].content.push(Content::Text(text)),
        }
    }

    fn insert_element(&mut self, tag: String, attrs: Vec<(String, String)>) -> usize {
        let id = self.arena.len();
        self.arena.push(RawNode {
            tag,
            attrs,
            content: Vec::new(),
        });
        let cur = self.current();
        self.arena[cur].content.push(Content::Child(id));
        id
    }

    fn exists(&self, tag: &str) -> bool {
        self.arena.iter().skip(1).any(|n| n.tag == tag)
    }

    fn in_foreign_content(&self) -> bool {
        self.stack
            .iter()
            .any(|&id| matches!(self.tag_of(id), "svg" | "math"))
    }

    /// Finds the topmost open `target` without crossing any `boundary` element.
    fn find_open(&self, targets: &[&str], boundaries: &[&str]) -> Option<usize> {
        for (depth, &id) in self.stack.iter().enumerate().rev() {
            let tag = self.tag_of(id);
            if targets.contains(&tag) {
                return Some(depth);
            }
            if boundaries.contains(&tag) {
                return None;
            }
        }
        None
    }

    fn close_to(&mut self, depth: usize) {
        self.stack.truncate(depth.max(1));
    }

    fn close_if_open(&mut self, targets: &[&str], boundaries: &[&str]) {
        if let Some(depth) = self.find_open(targets, boundaries) {
            self.close_to(depth);
        }
    }

    fn start(&mut self, name: String, attrs: Vec<(String, String)>, self_closing: bool) {
        match name.as_str() {
            "html" if self.exists("html") || self.stack.len() > 1 => return,
            "head" | "body" if self.exists(&name) => return,
            "head" if self.exists("body") => return,
            _ => {}
        }

        const SCOPE: &[&str] = &["table", "td", "th", "caption", "button", "html", "template"];
        if CLOSES_P.contains(&name.as_str()) {
            self.close_if_open(&["p"], SCOPE);
        }
        match name.as_str() {
            "li" => self.close_if_open(&["li"], &["ul", "ol", "menu", "table"]),
            "dt" | "dd" => self.close_if_open(&["dt", "dd"], &["dl", "table"]),
            "option" => self.close_if_open(&["option"], &["select", "datalist", "optgroup"]),
            "optgroup" => self.close_if_open(&["option", "optgroup"], &["select"]),
            "tr" => self.close_if_open(&["tr"], &["table", "thead", "tbody", "tfoot"]),
            "td" | "th" => self.close_if_open(&["td", "th"], &["tr", "table"]),
            "thead" | "tbody" | "tfoot" => {
                self.close_if_open(&["thead", "tbody", "tfoot"], &["table"])
            }
            "a" => self.close_if_open(&["a"], &["table", "td", "th"]),
            h if HEADINGS.contains(&h) && HEADINGS.contains(&self.tag_of(self.current())) => {
                self.stack.pop();
            }
            _ => {}
        }

        let foreign = self.in_foreign_content() || matches!(name.as_str(), "svg" | "math");
        let is_void = VOID.contains(&name.as_str());
        let id = self.insert_element(name, attrs);
        if !(is_void || (self_closing && foreign)) {
            self.stack.push(id);
        }
    }

    fn end(&mut self, name: &str) {
        match name {
            "body" | "html" => {}
            "br" => {
                self.insert_element("br".into(), Vec::new());
            }
            _ => {
                if let Some(depth) = self.find_open(&[name], &[]) {
                    self.close_to(depth);
                }
            }
        }
    }

    fn finish(mut self) -> Result<DomGraph, DomError> {
        if self.arena.len() == 1 {
            return Err(DomError::EmptyDocument);
        }
        let doc_content = std::mem::take(&mut self.arena[DOCUMENT].content);
        let html_pos = doc_content
            .iter()
            .position(|c| matches!(c, Content::Child(id) if self.arena[*id].tag == "html"));

        let root = match html_pos {
            Some(pos) => {
                let Content::Child(html) = doc_content[pos] else {
                    unreachable!()
                };
                let own = std::mem::take(&mut self.arena[html].content);
                let mut merged = Vec::with_capacity(doc_content.len() + own.len());
                let mut own = Some(own);
                for (i, item) in doc_content.into_iter().enumerate() {
                    if i == pos {
                        merged.extend(own.take().unwrap_or_default());
                    } else {
                        merged.push(item);
                    }
                }
                self.arena[html].content = merged;
                html
            }
            None => {
                self.arena[DOCUMENT].tag = "html".into();
                self.arena[DOCUMENT].content = doc_content;
                DOCUMENT
            }
        };
        Ok(self.into_graph(root))
    }

    fn into_graph(mut self, root: usize) -> DomGraph {
        let mut nodes: Vec<DomNode> = Vec::new();
        // (arena id, parent graph id)
        let mut stack: Vec<(usize, Option<NodeId>)> = vec![(root, None)];
        while let Some((raw_id, parent)) = stack.pop() {
            let id = nodes.len();
            let raw = &mut self.arena[raw_id];
            let content = std::mem::take(&mut raw.content);
            let mut attributes = BTreeMap::new();
            for (k, v) in std::mem::take(&mut raw.attrs) {
                attributes.entry(k).or_insert(v);
            }
            let classes = attributes
                .get("class")
                .map(|c: &String| c.split_ascii_whitespace().map(str::to_string).collect())
                .unwrap_or_default();
            let mut node = DomNode {
                id,
                tag: std::mem::take(&mut raw.tag),
                classes,
                attributes,
                text: String::new(),
                parent,
                children: Vec::new(),
                runs: Vec::new(),
            };
            let mut child_raw = Vec::new();
            for item in content {
                match item {
                    Content::Text(t) => node.runs.push(TextRun {
                        before_child: child_raw.len(),
                        raw: t,
                    }),
                    Content::Child(c) => child_raw.push(c),
                }
            }
            if node.is_content_bearing() {
                let own: String = node.runs.iter().map(|r| r.raw.as_str()).collect();
                node.text = normalize_whitespace(&own);
            } else {
                node.runs.clear();
            }
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            nodes.push(node);
            for &c in child_raw.iter().rev() {
                stack.push((c, Some(id)));
            }
        }
        DomGraph::from_nodes(nodes, 0).expect("tree builder emits a valid tree")
    }
}

//! CSV output of extracted contents.

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::extractor::ClassContents;

pub const HEADER: [&str; 3] = ["Class", "Tag", "Content"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CsvRow {
    pub class_name: String,
    pub tag_name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CsvDocument {
    pub rows: Vec<CsvRow>,
    pub filename: String,
}

impl CsvDocument {
    pub fn header(&self) -> [&'static str; 3] {
        HEADER
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

/// Restricts a username to `[A-Za-z0-9_.-]`, replacing anything else with `_`.
pub fn sanitize_username(username: &str) -> String {
    let s: String = username
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "_".to_string()
    } else {
        s
    }
}

/// `<username>_<YYYYMMDDTHHMMSSZ>.csv`
pub fn generate_filename(username: &str, timestamp: DateTime<Utc>) -> String {
    format!(
        "{}_{}.csv",
        sanitize_username(username),
        timestamp.format("%Y%m%dT%H%M%SZ")
    )
}

/// Flattens contents into rows in class → tag → content order.
pub fn to_csv(contents: &ClassContents, username: &str, timestamp: DateTime<Utc>) -> CsvDocument {
    let rows = contents
        .triples()
        .map(|(class, tag, content)| CsvRow {
            class_name: class.to_string(),
            tag_name: tag.to_string(),
            content: content.to_string(),
        })
        .collect();
    CsvDocument {
        rows,
        filename: generate_filename(username, timestamp),
    }
}

fn push_field(out: &mut Vec<u8>, field: &str) {
    if field.contains([',', '"', '\n', '\r']) {
        out.push(b'"');
        for b in field.bytes() {
            if b == b'"' {
                out.push(b'"');
            }
            out.push(b);
        }
        out.push(b'"');
    } else {
        out.extend_from_slice(field.as_bytes());
    }
}

fn push_record(out: &mut Vec<u8>, fields: [&str; 3]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        push_field(out, f);
    }
    out.push(b'\n');
}

/// UTF-8, LF-terminated, minimally quoted CSV bytes.
pub fn render_bytes(doc: &CsvDocument) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + doc.rows.len() * 48);
    push_record(&mut out, HEADER);
    for row in &doc.rows {
        push_record(&mut out, [&row.class_name, &row.tag_name, &row.content]);
    }
    out
}

//! Byte-exact CSV goldens for the fixture corpus, parser recovery goldens, and an
//! independent recount of extracted triples using a separate HTML5 parser.
//!
//! Set `SCRAPEFLOW_BLESS=1` to rewrite the golden files.

use std::path::Path;

use chrono::{TimeZone, Utc};
use scrapeflow_core::dom::{normalize_whitespace, parse_html, parse_str};
use scrapeflow_core::extractor::get_data;
use scrapeflow_core::structurer::{render_bytes, to_csv};
use scrapeflow_testkit::{fixtures_dir, golden_path, page_bytes, CORPUS};

const SKIPPED: [&str; 4] = ["script", "style", "template", "noscript"];

fn bless() -> bool {
    std::env::var_os("SCRAPEFLOW_BLESS").is_some()
}

fn check_golden(path: &Path, actual: &[u8]) {
    if bless() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "golden mismatch for {}\n--- expected\n{}\n--- actual\n{}",
        path.display(),
        String::from_utf8_lossy(&expected),
        String::from_utf8_lossy(actual)
    );
}

fn corpus_csv(name: &str) -> Vec<u8> {
    let graph = parse_html(&page_bytes(name), None).unwrap();
    let ts = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
    render_bytes(&to_csv(&get_data(&graph), "golden", ts))
}

#[test]
fn corpus_matches_csv_goldens() {
    for name in CORPUS {
        let csv = corpus_csv(name);
        assert!(csv.starts_with(b"Class,Tag,Content\n"), "{name}");
        check_golden(&golden_path(&format!("{name}.csv")), &csv);
    }
}

fn oracle_text(el: scraper::ElementRef<'_>, out: &mut String) {
    for child in el.children() {
        if let Some(t) = child.value().as_text() {
            out.push_str(t);
        } else if let Some(e) = scraper::ElementRef::wrap(child) {
            if !SKIPPED.contains(&e.value().name()) {
                oracle_text(e, out);
            }
        }
    }
}

/// Counts classed elements with non-empty subtree text, as parsed by html5ever.
fn oracle_triples(html: &str) -> usize {
    let doc = scraper::Html::parse_document(html);
    let all = scraper::Selector::parse("[class]").unwrap();
    doc.select(&all)
        .filter(|e| !SKIPPED.contains(&e.value().name()))
        .filter(|e| e.value().classes().next().is_some())
        .filter(|e| {
            let mut text = String::new();
            oracle_text(*e, &mut text);
            !normalize_whitespace(&text).is_empty()
        })
        .count()
}

#[test]
fn row_counts_match_independent_recount() {
    for name in CORPUS {
        let bytes = page_bytes(name);
        let graph = parse_html(&bytes, None).unwrap();
        let ours = get_data(&graph).triple_count();
        let decoded = scrapeflow_core::dom::decode_body(&bytes, None).unwrap();
        assert_eq!(ours, oracle_triples(&decoded), "triple count for {name}");
        let csv = corpus_csv(name);
        let rows = csv::Reader::from_reader(csv.as_slice()).records().count();
        assert_eq!(rows, ours, "csv rows for {name}");
    }
}

#[test]
fn parser_recovery_goldens() {
    let dir = fixtures_dir().join("parse");
    let mut inputs: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "html"))
        .collect();
    inputs.sort();
    assert!(inputs.len() >= 8, "parse corpus too small");
    for input in inputs {
        let html = std::fs::read_to_string(&input).unwrap();
        let outline = parse_str(&html).unwrap().outline();
        check_golden(&input.with_extension("outline"), outline.as_bytes());
    }
}

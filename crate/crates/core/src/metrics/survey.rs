use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use super::MetricsError;
use crate::extractor::ClassContents;
use crate::fetcher::{FetchError, FetchResponse};

pub const TABLE2_CSV: &str = include_str!("../../data/table2.csv");

/// A percentage held exactly in hundredths, e.g. `Percent(8261)` is 82.61 %.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Deserialize)]
pub struct Percent(pub u64);

impl Percent {
    /// `100·num/den` rounded half-up to two decimals.
    pub fn from_ratio(num: u64, den: u64) -> Percent {
        assert!(den > 0, "zero denominator");
        Percent((20_000 * num + den) / (2 * den))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

pub fn scrapability_rate(scrapable: u64, not_scrapable: u64) -> Result<Percent, MetricsError> {
    let total = scrapable + not_scrapable;
    if total == 0 {
        return Err(MetricsError::EmptyCategory(String::new()));
    }
    Ok(Percent::from_ratio(scrapable, total))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryStat {
    pub category: String,
    pub scrapable: u64,
    pub not_scrapable: u64,
    pub rate: Percent,
}

impl CategoryStat {
    pub fn new(
        category: impl Into<String>,
        scrapable: u64,
        not_scrapable: u64,
    ) -> Result<Self, MetricsError> {
        let category = category.into();
        let rate = scrapability_rate(scrapable, not_scrapable)
            .map_err(|_| MetricsError::EmptyCategory(category.clone()))?;
        Ok(CategoryStat {
            category,
            scrapable,
            not_scrapable,
            rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurveyReport {
    pub categories: Vec<CategoryStat>,
    /// Unweighted mean of the per-category rates.
    pub mean_rate: Percent,
}

impl SurveyReport {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>, rec: [&str; 4]| {
            w.write_record(rec).expect("in-memory write")
        };
        write(
            &mut w,
            ["category", "scrapable", "not_scrapable", "rate_percent"],
        );
        for c in &self.categories {
            write(
                &mut w,
                [
                    &c.category,
                    &c.scrapable.to_string(),
                    &c.not_scrapable.to_string(),
                    &c.rate.to_string(),
                ],
            );
        }
        write(&mut w, ["Average", "", "", &self.mean_rate.to_string()]);
        w.into_inner().expect("in-memory flush")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn aggregate_report(stats: Vec<CategoryStat>) -> Result<SurveyReport, MetricsError> {
    if stats.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    for s in &stats {
        let expected = CategoryStat::new(s.category.clone(), s.scrapable, s.not_scrapable)?;
        if expected.rate != s.rate {
            return Err(MetricsError::InvalidStats(format!(
                "rate of {:?} is inconsistent",
                s.category
            )));
        }
    }
    let sum: u64 = stats.iter().map(|s| s.rate.0).sum();
    let k = stats.len() as u64;
    let mean_rate = Percent((2 * sum + k) / (2 * k));
    Ok(SurveyReport {
        categories: stats,
        mean_rate,
    })
}

/// Reads `category,scrapable,not_scrapable` rows.
pub fn load_category_stats(csv_text: &str) -> Result<Vec<CategoryStat>, MetricsError> {
    #[derive(Deserialize)]
    struct Row {
        category: String,
        scrapable: u64,
        not_scrapable: u64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    reader
        .deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| MetricsError::MalformedFixture(e.to_string()))?;
            CategoryStat::new(row.category, row.scrapable, row.not_scrapable)
        })
        .collect()
}

/// The bundled per-category survey counts.
pub fn bundled_table2() -> Vec<CategoryStat> {
    load_category_stats(TABLE2_CSV).expect("bundled table is well-formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotScrapableReason {
    HttpError,
    ConsentDenied,
    NonHtml,
    EmptyExtraction,
}

impl NotScrapableReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::HttpError => "http_error",
            Self::ConsentDenied => "consent_denied",
            Self::NonHtml => "non_html",
            Self::EmptyExtraction => "empty_extraction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum Scrapability {
    Scrapable,
    NotScrapable(NotScrapableReason),
}

/// A site is scrapable when it returned a 2xx HTML page and extraction produced at
/// least one triple. `extraction` is `None` when the body could not be parsed.
pub fn classify_scrapable(
    fetch: &Result<FetchResponse, FetchError>,
    extraction: Option<&ClassContents>,
) -> Scrapability {
    use NotScrapableReason::*;
    let response = match fetch {
        Ok(r) => r,
        Err(FetchError::ConsentDenied(_)) => return Scrapability::NotScrapable(ConsentDenied),
        Err(_) => return Scrapability::NotScrapable(HttpError),
    };
    if !(200..300).contains(&response.status) {
        return Scrapability::NotScrapable(HttpError);
    }
    if !response.is_html() {
        return Scrapability::NotScrapable(NonHtml);
    }
    match extraction {
        Some(c) if c.triple_count() > 0 => Scrapability::Scrapable,
        _ => Scrapability::NotScrapable(EmptyExtraction),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_from_counts() {
        assert_eq!(scrapability_rate(24, 1).unwrap().to_string(), "96.00");
        assert_eq!(scrapability_rate(10, 15).unwrap().to_string(), "40.00");
        assert_eq!(scrapability_rate(19, 4).unwrap().to_string(), "82.61");
        assert_eq!(scrapability_rate(21, 2).unwrap().to_string(), "91.30");
        assert_eq!(scrapability_rate(5, 0).unwrap().to_string(), "100.00");
        assert_eq!(scrapability_rate(0, 5).unwrap().to_string(), "0.00");
        assert!(matches!(
            scrapability_rate(0, 0),
            Err(MetricsError::EmptyCategory(_))
        ));
    }

    #[test]
    fn rounding_is_half_up() {
        // 1/8 = 12.5 % exactly; 1/16 = 6.25 %; 1/32 = 3.125 % -> 3.13; 1/3 -> 33.33
        assert_eq!(Percent::from_ratio(1, 32).to_string(), "3.13");
        assert_eq!(Percent::from_ratio(1, 3).to_string(), "33.33");
        assert_eq!(Percent::from_ratio(2, 3).to_string(), "66.67");
        assert_eq!(Percent::from_ratio(1, 16).to_string(), "6.25");
    }

    #[test]
    fn mean_of_categories() {
        let r = aggregate_report(vec![
            CategoryStat::new("a", 2, 3).unwrap(),
            CategoryStat::new("b", 3, 2).unwrap(),
        ])
        .unwrap();
        assert_eq!(r.mean_rate.to_string(), "50.00");
        let single = aggregate_report(vec![CategoryStat::new("x", 19, 4).unwrap()]).unwrap();
        assert_eq!(single.mean_rate, single.categories[0].rate);
        assert_eq!(aggregate_report(vec![]), Err(MetricsError::EmptyReport));
    }

    #[test]
    fn report_serializations() {
        let r = aggregate_report(vec![CategoryStat::new("News, local", 3, 1).unwrap()]).unwrap();
        assert_eq!(
            String::from_utf8(r.to_csv()).unwrap(),
            "category,scrapable,not_scrapable,rate_percent\n\"News, local\",3,1,75.00\nAverage,,,75.00\n"
        );
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["mean_rate"], 75.0);
        assert_eq!(v["categories"][0]["scrapable"], 3);
    }

    #[test]
    fn malformed_category_rows() {
        assert!(matches!(
            load_category_stats("category,scrapable,not_scrapable\nx,one,2\n"),
            Err(MetricsError::MalformedFixture(_))
        ));
        assert!(matches!(
            load_category_stats("category,scrapable,not_scrapable\nx,0,0\n"),
            Err(MetricsError::EmptyCategory(_))
        ));
    }
}

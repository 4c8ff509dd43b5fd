use serde::{Deserialize, Serialize};

use super::MetricsError;

pub const TABLE3_CSV: &str = include_str!("../../data/table3.csv");

const COLUMNS: [&str; 5] = [
    "tool",
    "runtime_model_ms",
    "memory_model_mb",
    "runtime_plain_ms",
    "memory_plain_mb",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub tool: String,
    pub runtime_model_ms: f64,
    pub memory_model_mb: f64,
    pub runtime_plain_ms: f64,
    pub memory_plain_mb: f64,
}

/// Chart-ready series: one label per tool, in ranking order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartSeries {
    pub labels: Vec<String>,
    pub runtime_model_ms: Vec<f64>,
    pub runtime_plain_ms: Vec<f64>,
    pub memory_model_mb: Vec<f64>,
    pub memory_plain_mb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Sorted by modelled runtime, fastest first.
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn fastest(&self) -> &ComparisonRow {
        &self.rows[0]
    }

    pub fn slowest(&self) -> &ComparisonRow {
        self.rows.last().expect("report is never empty")
    }

    pub fn most_memory(&self) -> &ComparisonRow {
        self.rows
            .iter()
            .max_by(|a, b| a.memory_model_mb.total_cmp(&b.memory_model_mb))
            .expect("report is never empty")
    }

    pub fn row(&self, tool: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.tool == tool)
    }

    pub fn ranking(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.tool.as_str()).collect()
    }

    pub fn series(&self) -> ChartSeries {
        ChartSeries {
            labels: self.rows.iter().map(|r| r.tool.clone()).collect(),
            runtime_model_ms: self.rows.iter().map(|r| r.runtime_model_ms).collect(),
            runtime_plain_ms: self.rows.iter().map(|r| r.runtime_plain_ms).collect(),
            memory_model_mb: self.rows.iter().map(|r| r.memory_model_mb).collect(),
            memory_plain_mb: self.rows.iter().map(|r| r.memory_plain_mb).collect(),
        }
    }

    /// Ranked table with two decimals on every measurement.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["rank"];
        header.extend(COLUMNS);
        w.write_record(&header).expect("in-memory write");
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.tool.clone(),
                format!("{:.2}", r.runtime_model_ms),
                format!("{:.2}", r.memory_model_mb),
                format!("{:.2}", r.runtime_plain_ms),
                format!("{:.2}", r.memory_plain_mb),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn series_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.series()).expect("series serializes");
        s.push('\n');
        s
    }
}

pub fn parse_comparison_fixture(csv_text: &str) -> Result<Vec<ComparisonRow>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| MetricsError::MalformedFixture(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(MetricsError::MalformedFixture(format!(
            "expected columns {}, got {}",
            COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, row) in reader.deserialize::<ComparisonRow>().enumerate() {
        let row =
            row.map_err(|e| MetricsError::MalformedFixture(format!("row {}: {e}", line + 1)))?;
        let values = [
            row.runtime_model_ms,
            row.memory_model_mb,
            row.runtime_plain_ms,
            row.memory_plain_mb,
        ];
        if row.tool.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricsError::MalformedFixture(format!(
                "row {}: invalid values",
                line + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn render_comparison(mut rows: Vec<ComparisonRow>) -> Result<ComparisonReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::MalformedFixture("no rows".into()));
    }
    rows.sort_by(|a, b| {
        a.runtime_model_ms
            .total_cmp(&b.runtime_model_ms)
            .then_with(|| a.tool.cmp(&b.tool))
    });
    Ok(ComparisonReport { rows })
}

/// The bundled library comparison fixture.
pub fn bundled_table3() -> Vec<ComparisonRow> {
    parse_comparison_fixture(TABLE3_CSV).expect("bundled fixture is well-formed")
}

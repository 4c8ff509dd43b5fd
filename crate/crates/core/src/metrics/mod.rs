//! Cost models, constant fitting, scrapability statistics and comparison reports.
//!
//! Runtime and memory of one extraction are modelled as linear in the number of
//! nodes traversed (`n`) and relevant nodes (`m`):
//!
//! ```text
//! runtime_ms = c1·n + c2·m
//! memory_mb  = c3·n + c4·m
//! ```

mod comparison;
mod fit;
mod survey;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::TraversalStats;

pub use comparison::{
    bundled_table3, parse_comparison_fixture, render_comparison, ChartSeries, ComparisonReport,
    ComparisonRow, TABLE3_CSV,
};
pub use fit::{fit_constants, load_samples, sample_csv_line, FitReport, SAMPLES_HEADER};
pub use survey::{
    aggregate_report, bundled_table2, classify_scrapable, load_category_stats, scrapability_rate,
    CategoryStat, NotScrapableReason, Percent, Scrapability, SurveyReport, TABLE2_CSV,
};

/// Bytes charged per traversed node by the memory proxy.
pub const NODE_OVERHEAD_BYTES: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid stats: {0}")]
    InvalidStats(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("category {0:?} has no sites")]
    EmptyCategory(String),
    #[error("report needs at least one category")]
    EmptyReport,
    #[error("malformed fixture: {0}")]
    MalformedFixture(String),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostConstants {
    /// ms per node traversed
    pub c1: f64,
    /// ms per relevant node
    pub c2: f64,
    /// MB per node traversed
    pub c3: f64,
    /// MB per relevant node
    pub c4: f64,
}

impl CostConstants {
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64) -> Result<Self, MetricsError> {
        let c = CostConstants { c1, c2, c3, c4 };
        if [c1, c2, c3, c4].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricsError::InvalidConstants(format!("{c:?}")));
        }
        Ok(c)
    }
}

fn check_counts(n: u64, m: u64) -> Result<(), MetricsError> {
    if m > n {
        return Err(MetricsError::InvalidStats(format!("m={m} exceeds n={n}")));
    }
    Ok(())
}

pub fn predict_runtime(c: &CostConstants, n: u64, m: u64) -> Result<f64, MetricsError> {
    check_counts(n, m)?;
    Ok(c.c1 * n as f64 + c.c2 * m as f64)
}

pub fn predict_memory(c: &CostConstants, n: u64, m: u64) -> Result<f64, MetricsError> {
    check_counts(n, m)?;
    Ok(c.c3 * n as f64 + c.c4 * m as f64)
}

/// One measured extraction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSample {
    pub n: u64,
    pub m: u64,
    pub runtime_ms: f64,
    pub memory_mb: f64,
}

impl RunSample {
    pub fn new(n: u64, m: u64, runtime_ms: f64, memory_mb: f64) -> Result<Self, MetricsError> {
        check_counts(n, m)?;
        if !(runtime_ms >= 0.0 && memory_mb >= 0.0) {
            return Err(MetricsError::InvalidStats(format!(
                "negative or NaN measurement ({runtime_ms} ms, {memory_mb} MB)"
            )));
        }
        Ok(RunSample {
            n,
            m,
            runtime_ms,
            memory_mb,
        })
    }

    /// Builds a sample from traversal counters, the extracted text volume, and wall time.
    pub fn measure(stats: TraversalStats, content_bytes: u64, elapsed: Duration) -> Self {
        RunSample {
            n: stats.n_visited,
            m: stats.m_relevant,
            runtime_ms: elapsed.as_secs_f64() * 1e3,
            memory_mb: memory_proxy_mb(stats.n_visited, content_bytes),
        }
    }
}

/// Memory proxy: stored text plus a fixed per-node overhead, in MiB.
pub fn memory_proxy_mb(n_visited: u64, content_bytes: u64) -> f64 {
    (content_bytes + NODE_OVERHEAD_BYTES * n_visited) as f64 / (1u64 << 20) as f64
}

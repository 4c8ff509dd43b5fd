//! The fetch → parse → extract sequence shared by the API service and the CLI,
//! and the scrapability survey built on it.

use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{parse_html, DomError, TraversalStats};
use crate::extractor::{extract, get_data, ClassContents, ExtractOptions};
use crate::fetcher::{FetchError, FetchRequest, FetchResponse, Fetcher};
use crate::metrics::{
    aggregate_report, classify_scrapable, CategoryStat, MetricsError, RunSample, Scrapability,
    SurveyReport,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("response is not HTML ({0})")]
    NonHtml(String),
    #[error(transparent)]
    Document(#[from] DomError),
}

impl PipelineError {
    pub fn reason_code(&self) -> String {
        match self {
            PipelineError::Fetch(e) => e.reason_code(),
            PipelineError::NonHtml(_) => "non_html".into(),
            PipelineError::Document(DomError::EmptyDocument) => "empty_document".into(),
            PipelineError::Document(DomError::Encoding(_)) => "encoding".into(),
            PipelineError::Document(_) => "document".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScrapeOutcome {
    pub response: FetchResponse,
    pub contents: ClassContents,
    pub stats: TraversalStats,
    /// Parse and extraction cost of this run.
    pub sample: RunSample,
}

/// Fetches `request` through the consent gate, parses the body and extracts
/// class-grouped contents.
pub async fn scrape_url(
    fetcher: &Fetcher,
    request: &FetchRequest,
    options: &ExtractOptions,
) -> Result<ScrapeOutcome, PipelineError> {
    let response = fetcher.fetch_checked(request).await?;
    if !response.is_html() {
        return Err(PipelineError::NonHtml(
            response.content_type().unwrap_or_default().to_string(),
        ));
    }
    let started = Instant::now();
    let graph = parse_html(&response.body, response.charset())?;
    let (contents, stats) = extract(&graph, options);
    let sample = RunSample::measure(stats, contents.content_bytes() as u64, started.elapsed());
    Ok(ScrapeOutcome {
        response,
        contents,
        stats,
        sample,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySite {
    pub url: String,
    pub category: String,
    pub consent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySpec {
    pub sites: Vec<SurveySite>,
}

impl SurveySpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.sites.is_empty() {
            return Err("survey needs at least one site".into());
        }
        if let Some(site) = self.sites.iter().find(|s| s.category.trim().is_empty()) {
            return Err(format!("site {} has an empty category", site.url));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SiteResult {
    pub url: String,
    pub category: String,
    pub outcome: Scrapability,
}

async fn survey_site(fetcher: &Fetcher, site: &SurveySite, respect_robots: bool) -> SiteResult {
    let fetched = match FetchRequest::new(&site.url) {
        Ok(req) => {
            fetcher
                .fetch_checked(&req.with_consent(site.consent).with_robots(respect_robots))
                .await
        }
        Err(e) => Err(e),
    };
    let contents = match &fetched {
        Ok(resp) if resp.is_html() => parse_html(&resp.body, resp.charset())
            .ok()
            .map(|g| get_data(&g)),
        _ => None,
    };
    SiteResult {
        url: site.url.clone(),
        category: site.category.clone(),
        outcome: classify_scrapable(&fetched, contents.as_ref()),
    }
}

/// Classifies every site (up to `jobs` at a time) and aggregates per category,
/// in order of first appearance.
pub async fn run_survey(
    fetcher: &Fetcher,
    spec: &SurveySpec,
    respect_robots: bool,
    jobs: usize,
) -> Result<(SurveyReport, Vec<SiteResult>), MetricsError> {
    let results: Vec<SiteResult> = stream::iter(&spec.sites)
        .map(|site| survey_site(fetcher, site, respect_robots))
        .buffered(jobs.max(1))
        .collect()
        .await;

    let mut order: Vec<&str> = Vec::new();
    for r in &results {
        if !order.contains(&r.category.as_str()) {
            order.push(&r.category);
        }
    }
    let stats = order
        .iter()
        .map(|&cat| {
            let in_cat = results.iter().filter(|r| r.category == cat);
            let ok = in_cat
                .clone()
                .filter(|r| r.outcome == Scrapability::Scrapable)
                .count() as u64;
            let total = in_cat.count() as u64;
            CategoryStat::new(cat, ok, total - ok)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((aggregate_report(stats)?, results))
}

use scrapeflow_core::fetcher::FetchError;
use scrapeflow_core::metrics::MetricsError;
use scrapeflow_core::persistence::{AuthError, StoreError};
use scrapeflow_core::pipeline::PipelineError;

/// Failure of one command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or input files that cannot be interpreted.
    #[error("usage: {0}")]
    Usage(String),
    #[error("consent denied: {0}")]
    Consent(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Conflict(String),
    /// Network or filesystem failure.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Consent(_) => 3,
            CliError::Data(_) => 4,
            CliError::Conflict(_) => 5,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let reason = e.reason_code();
        match e {
            PipelineError::Fetch(FetchError::ConsentDenied(_)) => CliError::Consent(reason),
            PipelineError::Fetch(FetchError::InvalidUrl(m) | FetchError::InvalidRequest(m)) => {
                CliError::Usage(m)
            }
            PipelineError::Fetch(f) => CliError::Io(format!("{reason}: {f}")),
            PipelineError::NonHtml(_) | PipelineError::Document(_) => {
                CliError::Data(format!("{reason}: {e}"))
            }
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match &e {
            MetricsError::DegenerateDesign(_) => "degenerate_design",
            MetricsError::MalformedFixture(_) => "malformed_fixture",
            MetricsError::EmptyReport | MetricsError::EmptyCategory(_) => "empty_report",
            _ => "invalid_data",
        };
        CliError::Data(format!("{code}: {e}"))
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<AuthError> for CliError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::Validation(m) => CliError::Usage(m),
            other => CliError::Io(other.to_string()),
        }
    }
}

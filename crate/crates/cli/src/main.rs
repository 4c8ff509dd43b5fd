//! `scrapeflow` command-line interface.
//!
//! Exit codes: 0 ok, 1 network or filesystem failure, 2 usage, 3 consent denied,
//! 4 data error, 5 conflict.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use scrapeflow_core::dom::{efficiency, FilterRule, TagSet};
use scrapeflow_core::extractor::ExtractOptions;
use scrapeflow_core::fetcher::{FetchRequest, Fetcher};
use scrapeflow_core::metrics::{
    aggregate_report, bundled_table2, bundled_table3, fit_constants, load_category_stats,
    load_samples, parse_comparison_fixture, render_comparison, sample_csv_line, SAMPLES_HEADER,
};
use scrapeflow_core::persistence::{create_user, CreateOutcome, JsonlStore};
use scrapeflow_core::pipeline::{run_survey, scrape_url, SurveySpec};
use scrapeflow_core::structurer::{render_bytes, to_csv};
use scrapeflow_core::{Clock, FixedClock, SystemClock};

mod error;

use error::CliError;

#[derive(Parser)]
#[command(
    name = "scrapeflow",
    version,
    about = "Class-grouped web content extraction"
)]
struct Cli {
    /// Fixed current time (RFC 3339) used for generated filenames and timestamps.
    #[arg(long, global = true, env = "SCRAPEFLOW_NOW", hide = true)]
    now: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch one page and write its class-grouped contents as CSV.
    Scrape(ScrapeArgs),
    /// Classify a list of sites as scrapable or not and report rates per category.
    Survey(SurveyArgs),
    /// Fit the linear runtime/memory cost model to measured samples.
    Fit(FitArgs),
    /// Render a bundled or supplied result table.
    Report {
        #[command(subcommand)]
        table: ReportCommand,
    },
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Manage accounts in the data directory.
    User {
        #[command(subcommand)]
        action: UserCommand,
    },
}

#[derive(Args)]
struct ScrapeArgs {
    url: String,
    /// Comma-separated tag names to consider (default: all).
    #[arg(long)]
    tags: Option<String>,
    /// Keep only regex matches of each element's text.
    #[arg(long)]
    filter_regex: Option<String>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the robots.txt check.
    #[arg(long)]
    no_robots: bool,
    /// Confirm that you are allowed to scrape this site. Required.
    #[arg(long)]
    consent: bool,
    /// Username used in the generated filename.
    #[arg(long, default_value = "anonymous")]
    user: String,
    /// Write stats, efficiency and the run sample as JSON.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Append this run's (n, m, runtime_ms, memory_mb) to a samples CSV.
    #[arg(long)]
    samples_out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(Args)]
struct SurveyArgs {
    /// JSON file of the form {"sites": [{"url", "category", "consent"}]}.
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the report and per-site outcomes as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    #[arg(long)]
    no_robots: bool,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with columns n,m,runtime_ms,memory_mb.
    samples: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Tool comparison: runtime and memory per library, fastest first.
    Table3 {
        /// CSV with columns tool,runtime_model_ms,memory_model_mb,runtime_plain_ms,memory_plain_mb.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Chart series JSON (default: next to --out with a .series.json extension).
        #[arg(long)]
        series_out: Option<PathBuf>,
    },
    /// Scrapability rate per category with the unweighted mean.
    Table2 {
        /// CSV with columns category,scrapable,not_scrapable.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address (overrides SCRAPEFLOW_BIND).
    #[arg(long)]
    bind: Option<String>,
}

#[derive(Subcommand)]
enum UserCommand {
    /// Create an account; the password is read from SCRAPEFLOW_PASSWORD or stdin.
    Add {
        name: String,
        #[arg(long, env = "SCRAPEFLOW_DATA_DIR", default_value = scrapeflow_service::DEFAULT_DATA_DIR)]
        data_dir: PathBuf,
        #[arg(long, env = "SCRAPEFLOW_PASSWORD", hide_env_values = true)]
        password: Option<String>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = clock(cli.now.as_deref()).and_then(|clock| run(cli.command, clock));
    if let Err(e) = result {
        eprintln!("scrapeflow: {e}");
        std::process::exit(e.exit_code());
    }
}

fn clock(now: Option<&str>) -> Result<Arc<dyn Clock>, CliError> {
    match now {
        None => Ok(Arc::new(SystemClock)),
        Some(s) => DateTime::parse_from_rfc3339(s)
            .map(|t| Arc::new(FixedClock(t.with_timezone(&Utc))) as Arc<dyn Clock>)
            .map_err(|e| CliError::Usage(format!("invalid time {s:?}: {e}"))),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::io("starting runtime", e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}

fn run(command: Command, clock: Arc<dyn Clock>) -> Result<(), CliError> {
    match command {
        Command::Scrape(args) => scrape(args, clock.as_ref()),
        Command::Survey(args) => survey(args),
        Command::Fit(args) => fit(args),
        Command::Report { table } => report(table),
        Command::Serve(args) => serve(args, clock),
        Command::User {
            action:
                UserCommand::Add {
                    name,
                    data_dir,
                    password,
                },
        } => user_add(&name, &data_dir, password),
    }
}

fn extract_options(args: &ScrapeArgs) -> Result<ExtractOptions, CliError> {
    let usage = |e: scrapeflow_core::dom::DomError| CliError::Usage(e.to_string());
    Ok(ExtractOptions {
        tags: args
            .tags
            .as_deref()
            .map(TagSet::parse_list)
            .transpose()
            .map_err(usage)?,
        rule: match args.filter_regex.as_deref() {
            Some(re) => FilterRule::regex(re).map_err(usage)?,
            None => FilterRule::pass_through(),
        },
    })
}

fn scrape(args: ScrapeArgs, clock: &dyn Clock) -> Result<(), CliError> {
    let options = extract_options(&args)?;
    let request = FetchRequest::new(&args.url)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_consent(args.consent)
        .with_robots(!args.no_robots)
        .with_timeout(std::time::Duration::from_secs(args.timeout_secs));
    let outcome = runtime()?.block_on(scrape_url(&Fetcher::new(), &request, &options))?;
    let doc = to_csv(&outcome.contents, &args.user, clock.now());
    let bytes = render_bytes(&doc);
    match &args.out {
        Some(path) => write_file(path, &bytes)?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::io("stdout", e))?,
    }
    let eff = efficiency(&outcome.stats).unwrap_or(0.0);
    if let Some(path) = &args.stats_out {
        let stats = serde_json::json!({
            "url": args.url,
            "final_url": outcome.response.final_url.as_str(),
            "filename": doc.filename,
            "row_count": doc.row_count(),
            "class_count": outcome.contents.class_count(),
            "stats": outcome.stats,
            "efficiency": eff,
            "sample": outcome.sample,
        });
        write_file(
            path,
            serde_json::to_string_pretty(&stats)
                .expect("json")
                .as_bytes(),
        )?;
    }
    if let Some(path) = &args.samples_out {
        append_sample(path, &outcome.sample)?;
    }
    eprintln!(
        "{} rows from {} classes (n={}, m={}, efficiency={eff:.4}); suggested filename {}",
        doc.row_count(),
        outcome.contents.class_count(),
        outcome.stats.n_visited,
        outcome.stats.m_relevant,
        doc.filename
    );
    Ok(())
}

fn append_sample(
    path: &Path,
    sample: &scrapeflow_core::metrics::RunSample,
) -> Result<(), CliError> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path.display(), e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(&SAMPLES_HEADER.join(","));
        text.push('\n');
    }
    text.push_str(&sample_csv_line(sample));
    file.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path.display(), e))
}

fn survey(args: SurveyArgs) -> Result<(), CliError> {
    let spec: SurveySpec = serde_json::from_str(&read_text(&args.spec)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    spec.validate().map_err(CliError::Usage)?;
    let fetcher = Fetcher::new().with_politeness(std::time::Duration::from_millis(200));
    let (report, sites) =
        runtime()?.block_on(run_survey(&fetcher, &spec, !args.no_robots, args.jobs))?;
    write_file(&args.out, &report.to_csv())?;
    if let Some(path) = &args.json_out {
        let json = serde_json::json!({ "report": report, "sites": sites });
        write_file(
            path,
            serde_json::to_string_pretty(&json)
                .expect("json")
                .as_bytes(),
        )?;
    }
    eprintln!(
        "{} categories, mean rate {}%",
        report.categories.len(),
        report.mean_rate
    );
    Ok(())
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let samples = load_samples(&read_text(&args.samples)?)?;
    let report = fit_constants(&samples)?;
    write_file(
        &args.out,
        serde_json::to_string_pretty(&report)
            .expect("json")
            .as_bytes(),
    )?;
    let c = report.constants;
    eprintln!(
        "c1={:.6} c2={:.6} c3={:.6} c4={:.6} (runtime rmse {:.4} ms, memory rmse {:.6} MB)",
        c.c1, c.c2, c.c3, c.c4, report.runtime_rmse_ms, report.memory_rmse_mb
    );
    Ok(())
}

fn report(table: ReportCommand) -> Result<(), CliError> {
    match table {
        ReportCommand::Table3 {
            fixture,
            out,
            series_out,
        } => {
            let rows = match &fixture {
                Some(path) => parse_comparison_fixture(&read_text(path)?)?,
                None => bundled_table3(),
            };
            let report = render_comparison(rows)?;
            write_file(&out, &report.to_csv())?;
            let series_path = series_out.unwrap_or_else(|| out.with_extension("series.json"));
            write_file(&series_path, report.series_json().as_bytes())?;
            eprintln!("ranking: {}", report.ranking().join(" < "));
        }
        ReportCommand::Table2 { fixture, out } => {
            let stats = match &fixture {
                Some(path) => load_category_stats(&read_text(path)?)?,
                None => bundled_table2(),
            };
            let report = aggregate_report(stats)?;
            write_file(&out, &report.to_csv())?;
            eprintln!("mean rate {}%", report.mean_rate);
        }
    }
    Ok(())
}

fn serve(args: ServeArgs, clock: Arc<dyn Clock>) -> Result<(), CliError> {
    let mut config =
        scrapeflow_service::Config::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(bind) = &args.bind {
        config.bind = bind
            .parse()
            .map_err(|e| CliError::Usage(format!("--bind {bind:?}: {e}")))?;
    }
    let state = scrapeflow_service::AppState::open_with_clock(&config, clock)?;
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .map_err(|e| CliError::io(config.bind, e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::io("listener", e))?;
        eprintln!("listening on http://{addr}");
        scrapeflow_service::serve_on(listener, Arc::new(state), config.cors_origin.as_deref())
            .await
            .map_err(|e| CliError::io("server", e))
    })
}

fn user_add(name: &str, data_dir: &Path, password: Option<String>) -> Result<(), CliError> {
    let password = match password {
        Some(p) => p,
        None => {
            let mut line = String::new();
            std::io::stdin()
                .lock()
                .read_line(&mut line)
                .map_err(|e| CliError::io("stdin", e))?;
            line.trim_end_matches(['\r', '\n']).to_string()
        }
    };
    let store = JsonlStore::open(data_dir)?;
    match create_user(&store, name, &password)? {
        CreateOutcome::Created => {
            eprintln!("created user {name}");
            Ok(())
        }
        CreateOutcome::UsernameExists => {
            Err(CliError::Conflict(format!("username exists: {name}")))
        }
    }
}

//! Local HTTP fixture server and page corpora for tests.
//!
//! The server runs on its own thread and runtime, so it can be used from plain
//! `#[test]` functions, async tests, and tests that shell out to the CLI binary.
//! Every request path (with query) is appended to a log.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, StatusCode, Uri};
use axum::response::Response;
use axum::Router;
use parking_lot::Mutex;
use tokio::sync::oneshot;

pub const DEFAULT_ROBOTS: &str = "User-agent: *\nDisallow: /private/\n";

/// Names of the twelve corpus pages under `fixtures/pages`.
pub const CORPUS: [&str; 12] = [
    "shop",
    "blog",
    "news",
    "portfolio",
    "forum",
    "recipes",
    "directory",
    "malformed",
    "scripts",
    "multilingual",
    "latin1",
    "noclass",
];

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn page_path(name: &str) -> PathBuf {
    fixtures_dir().join("pages").join(format!("{name}.html"))
}

pub fn page_bytes(name: &str) -> Vec<u8> {
    std::fs::read(page_path(name)).unwrap_or_else(|e| panic!("fixture page {name}: {e}"))
}

pub fn golden_path(name: &str) -> PathBuf {
    fixtures_dir().join("goldens").join(name)
}

/// The 1 KiB page served at `/static.html`.
pub fn static_page() -> Vec<u8> {
    std::fs::read(fixtures_dir().join("static.html")).expect("static fixture")
}

/// One entry of the synthetic survey corpus: path on the fixture server,
/// category, consent flag.
#[derive(Debug, Clone, Copy)]
pub struct SurveyEntry {
    pub path: &'static str,
    pub category: &'static str,
    pub consent: bool,
}

const fn site(path: &'static str, category: &'static str, consent: bool) -> SurveyEntry {
    SurveyEntry {
        path,
        category,
        consent,
    }
}

/// Twenty sites in four categories with known outcomes:
/// Shops 4/5, Blogs 3/5, Social 1/5, Docs 5/5.
pub const SURVEY_CORPUS: [SurveyEntry; 20] = [
    site("/pages/shop.html", "Shops", true),
    site("/pages/shop.html?store=2", "Shops", true),
    site("/pages/forum.html?store=3", "Shops", true),
    site("/pages/directory.html", "Shops", true),
    site("/gone/shop4.html", "Shops", true),
    site("/pages/blog.html", "Blogs", true),
    site("/pages/news.html", "Blogs", true),
    site("/pages/multilingual.html", "Blogs", true),
    site("/data.json", "Blogs", true),
    site("/pages/noclass.html", "Blogs", true),
    site("/pages/portfolio.html", "Social", true),
    site("/pages/blog.html?social=1", "Social", false),
    site("/private/feed.html", "Social", true),
    site("/forbidden", "Social", true),
    site("/redirect-loop", "Social", true),
    site("/pages/recipes.html", "Docs", true),
    site("/pages/malformed.html", "Docs", true),
    site("/pages/scripts.html", "Docs", true),
    site("/pages/latin1.html", "Docs", true),
    site("/static.html", "Docs", true),
];

/// `{"sites": [...]}` for the survey corpus against `server`.
pub fn survey_spec_json(server: &FixtureServer) -> String {
    let sites: Vec<_> = SURVEY_CORPUS
        .iter()
        .map(|s| serde_json::json!({"url": server.url(s.path), "category": s.category, "consent": s.consent}))
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "sites": sites })).expect("json")
}

#[derive(Clone)]
struct ServerState {
    log: Arc<Mutex<Vec<String>>>,
    robots: Option<Arc<str>>,
}

pub struct FixtureServer {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<String>>>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl FixtureServer {
    /// Starts a server with the default robots.txt.
    pub fn start() -> Self {
        Self::start_with_robots(Some(DEFAULT_ROBOTS))
    }

    /// Starts a server; `None` makes `/robots.txt` a 404.
    pub fn start_with_robots(robots: Option<&str>) -> Self {
        let log = Arc::new(Mutex::new(Vec::new()));
        let state = ServerState {
            log: log.clone(),
            robots: robots.map(Arc::from),
        };
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("fixture runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                    .await
                    .expect("bind fixture server");
                addr_tx
                    .send(listener.local_addr().expect("local addr"))
                    .expect("report addr");
                let app = Router::new().fallback(move |uri: Uri| {
                    let state = state.clone();
                    async move { respond(&state, uri).await }
                });
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = shutdown_rx.await;
                    })
                    .await
                    .expect("fixture server");
            });
        });
        let addr = addr_rx.recv().expect("fixture server started");
        FixtureServer {
            addr,
            log,
            shutdown: Some(shutdown_tx),
            thread: Some(thread),
        }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Every request received so far, as path plus query.
    pub fn requests(&self) -> Vec<String> {
        self.log.lock().clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().clear();
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn html(bytes: Vec<u8>) -> Response {
    Response::builder()
        .header(header::CONTENT_TYPE, "text/html")
        .body(Body::from(bytes))
        .expect("response")
}

fn status(code: StatusCode) -> Response {
    Response::builder()
        .status(code)
        .body(Body::from(code.to_string()))
        .expect("response")
}

async fn respond(state: &ServerState, uri: Uri) -> Response {
    let path_q = uri
        .path_and_query()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| uri.path().into());
    state.log.lock().push(path_q);
    let path = uri.path();
    match path {
        "/robots.txt" => match &state.robots {
            Some(body) => Response::builder()
                .header(header::CONTENT_TYPE, "text/plain")
                .body(Body::from(body.to_string()))
                .expect("response"),
            None => status(StatusCode::NOT_FOUND),
        },
        "/static.html" => html(static_page()),
        "/redirect-loop" => Response::builder()
            .status(StatusCode::FOUND)
            .header(header::LOCATION, "/redirect-loop")
            .body(Body::empty())
            .expect("response"),
        "/redirect-once" => Response::builder()
            .status(StatusCode::MOVED_PERMANENTLY)
            .header(header::LOCATION, "/static.html")
            .body(Body::empty())
            .expect("response"),
        "/forbidden" => status(StatusCode::FORBIDDEN),
        "/server-error" => status(StatusCode::INTERNAL_SERVER_ERROR),
        "/data.json" => Response::builder()
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(r#"{"items": [1, 2, 3]}"#))
            .expect("response"),
        "/big.html" => {
            let mut body = b"<html><body><p class=\"big\">".to_vec();
            body.resize(64 * 1024, b'a');
            html(body)
        }
        "/slow.html" => {
            tokio::time::sleep(Duration::from_secs(3)).await;
            html(static_page())
        }
        "/private/feed.html" => html(page_bytes("blog")),
        _ => {
            if let Some(name) = path
                .strip_prefix("/pages/")
                .and_then(|p| p.strip_suffix(".html"))
            {
                if CORPUS.contains(&name) {
                    return html(page_bytes(name));
                }
            }
            status(StatusCode::NOT_FOUND)
        }
    }
}

/// One element of a synthetic tree: parent index (earlier in the list), tag, own text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthNode {
    pub parent: Option<usize>,
    pub tag: &'static str,
    pub classes: Vec<&'static str>,
    pub text: String,
}

pub const SYNTH_TAGS: [&str; 8] = ["div", "p", "span", "li", "ul", "a", "h2", "section"];
const SYNTH_CLASSES: [&str; 5] = ["item", "price", "title", "nav", "card"];
const SYNTH_TEXT: [&str; 8] = [
    "",
    "",
    "  ",
    "alpha",
    "Price 42",
    "x, \"y\"",
    "beta\ngamma",
    "42",
];

/// A random tree of exactly `size` nodes from `seed`. Node 0 is the root; every
/// other node's parent precedes it.
pub fn synth_tree(seed: u64, size: usize) -> Vec<SynthNode> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..size.max(1))
        .map(|i| {
            let n_classes = rng.random_range(0..3);
            SynthNode {
                parent: if i == 0 {
                    None
                } else {
                    Some(rng.random_range(0..i))
                },
                tag: if i == 0 {
                    "html"
                } else {
                    SYNTH_TAGS[rng.random_range(0..SYNTH_TAGS.len())]
                },
                classes: (0..n_classes)
                    .map(|_| SYNTH_CLASSES[rng.random_range(0..SYNTH_CLASSES.len())])
                    .collect(),
                text: SYNTH_TEXT[rng.random_range(0..SYNTH_TEXT.len())].to_string(),
            }
        })
        .collect()
}

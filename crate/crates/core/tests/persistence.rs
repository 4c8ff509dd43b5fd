use std::sync::{Arc, Barrier};

use chrono::{Duration, TimeZone, Utc};
use scrapeflow_core::dom::TraversalStats;
use scrapeflow_core::persistence::{
    authenticate, create_user, list_history, record_history, AuthOutcome, CreateOutcome,
    DocumentStore, HistoryRecord, HistoryStatus, JsonlStore, SessionStore,
};

#[test]
fn concurrent_registration_creates_exactly_one_user() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(JsonlStore::open(dir.path()).unwrap());
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let (store, barrier) = (store.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                create_user(store.as_ref(), "racer", &format!("password{i}")).unwrap()
            })
        })
        .collect();
    let outcomes: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(
        outcomes
            .iter()
            .filter(|o| **o == CreateOutcome::Created)
            .count(),
        1
    );
    let reopened = JsonlStore::open(dir.path()).unwrap();
    assert_eq!(
        reopened
            .count("users", &serde_json::json!({"username": "racer"}))
            .unwrap(),
        1
    );
}

#[test]
fn store_files_never_contain_plaintext_passwords() {
    let dir = tempfile::tempdir().unwrap();
    let store = JsonlStore::open(dir.path()).unwrap();
    let passwords = ["hunter22-secret", "correct horse battery", "pässwörd-ü"];
    for (i, pw) in passwords.iter().enumerate() {
        create_user(&store, &format!("user{i}"), pw).unwrap();
    }
    let sessions = SessionStore::default();
    let now = Utc::now();
    assert!(matches!(
        authenticate(&store, &sessions, "user0", passwords[0], now).unwrap(),
        AuthOutcome::Session(_)
    ));
    drop(store);
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        for pw in passwords {
            assert!(
                !bytes.windows(pw.len()).any(|w| w == pw.as_bytes()),
                "plaintext {pw:?} found"
            );
        }
    }
}

#[test]
fn data_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = JsonlStore::open(dir.path()).unwrap();
        create_user(&store, "alice", "secret1").unwrap();
        record_history(
            &store,
            HistoryRecord {
                id: String::new(),
                username: "alice".into(),
                url: "http://example.test/".into(),
                timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
                csv_path: None,
                status: HistoryStatus::Failed {
                    reason: "http_status:404".into(),
                },
                stats: TraversalStats::default(),
            },
        )
        .unwrap();
    }
    let store = JsonlStore::open(dir.path()).unwrap();
    let sessions = SessionStore::new(Duration::hours(1));
    let now = Utc::now();
    let AuthOutcome::Session(s) = authenticate(&store, &sessions, "alice", "secret1", now).unwrap()
    else {
        panic!("login failed after reopen");
    };
    assert_eq!(sessions.validate(&s.token, now).unwrap().username, "alice");
    assert!(sessions
        .validate(&s.token, now + Duration::hours(2))
        .is_none());
    assert_eq!(
        authenticate(&store, &sessions, "alice", "wrong!!", now).unwrap(),
        AuthOutcome::InvalidCredentials
    );
    let history = list_history(&store, "alice", 10, 0).unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(
        history[0].status,
        HistoryStatus::Failed {
            reason: "http_status:404".into()
        }
    );
}

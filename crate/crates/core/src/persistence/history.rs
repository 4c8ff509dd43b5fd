use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{users::user_exists, AuthError, DocumentStore, StoreError, HISTORY};
use crate::dom::TraversalStats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum HistoryStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// Assigned by [`record_history`]; any incoming value is replaced.
    #[serde(default)]
    pub id: String,
    pub username: String,
    pub url: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub csv_path: Option<String>,
    pub status: HistoryStatus,
    pub stats: TraversalStats,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("corrupt history record: {0}")]
    Corrupt(String),
}

impl From<AuthError> for HistoryError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::Store(s) => HistoryError::Store(s),
            other => HistoryError::Corrupt(other.to_string()),
        }
    }
}

/// Appends a record and returns its new id.
pub fn record_history(
    store: &dyn DocumentStore,
    mut record: HistoryRecord,
) -> Result<String, HistoryError> {
    if !user_exists(store, &record.username)? {
        return Err(HistoryError::UnknownUser(record.username));
    }
    record.id = uuid::Uuid::new_v4().simple().to_string();
    let doc = serde_json::to_value(&record).expect("history record serializes");
    store.insert(HISTORY, doc)?;
    Ok(record.id)
}

/// Newest first; records with equal timestamps keep insertion order.
pub fn list_history(
    store: &dyn DocumentStore,
    username: &str,
    limit: usize,
    offset: usize,
) -> Result<Vec<HistoryRecord>, HistoryError> {
    if !user_exists(store, username)? {
        return Err(HistoryError::UnknownUser(username.to_string()));
    }
    let mut records = store
        .find(HISTORY, &json!({ "username": username }))?
        .into_iter()
        .map(|d| {
            serde_json::from_value::<HistoryRecord>(d)
                .map_err(|e| HistoryError::Corrupt(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| std::cmp::Reverse(r.timestamp));
    Ok(records.into_iter().skip(offset).take(limit).collect())
}

pub fn count_history(store: &dyn DocumentStore, username: &str) -> Result<usize, HistoryError> {
    Ok(store.count(HISTORY, &json!({ "username": username }))?)
}

/// Links an exported CSV file to a history record.
pub fn attach_csv(
    store: &dyn DocumentStore,
    record_id: &str,
    csv_path: &str,
) -> Result<bool, HistoryError> {
    let patch = json!({ "csv_path": csv_path });
    Ok(store.update_one(
        HISTORY,
        &json!({ "id": record_id }),
        patch.as_object().cloned().unwrap_or_default(),
    )?)
}
